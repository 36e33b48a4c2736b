"""
Run script that reproduces every scenario configuration in ``configs/``.
"""

import argparse
import logging
import os
import subprocess
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"


def scenario_of(config_path):
    """Read the ``scenario`` key of a config file."""
    for line in config_path.read_text(encoding="utf-8").splitlines():
        key, _, value = line.split("#", 1)[0].partition("=")
        if key.strip() == "scenario":
            return value.strip()
    raise ValueError(f"{config_path} does not set 'scenario'")


def run_all(out_dir=None, threads=None, trials=None, gnuplot=True):
    """
    Run each config through the ``simlab`` CLI.

    Args:
        out_dir (str, optional): Output directory, defaults to SIMLAB_OUT_DIR or ``results``.
        threads (int, optional): Worker processes per scenario.
        trials (int, optional): Trial count overriding every config.
        gnuplot (bool): Also write gnuplot data files.

    Returns:
        int: Number of failed scenarios.
    """
    out_dir = Path(out_dir or os.getenv("SIMLAB_OUT_DIR", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0

    for config_path in sorted(CONFIG_DIR.glob("*.conf")):
        out_path = out_dir / f"{config_path.stem}.csv"
        cmd = [
            sys.executable,
            "-m",
            "app.main",
            scenario_of(config_path),
            "--config",
            str(config_path),
            "--out",
            str(out_path),
        ]
        if threads:
            cmd += ["--threads", str(threads)]
        if trials:
            cmd += ["--trials", str(trials)]
        if gnuplot:
            cmd.append("--gnuplot")

        logger.info(f"Running {config_path.name} -> {out_path}")
        result = subprocess.run(cmd, cwd=Path(__file__).parent)
        if result.returncode != 0:
            logger.error(f"{config_path.name} failed with exit code {result.returncode}")
            failures += 1

    logger.info(f"Batch finished, {failures} failure(s)")
    return failures


def main():
    """Main function."""
    parser = argparse.ArgumentParser(description="Run every scenario configuration")
    parser.add_argument("--out-dir", type=str, help="Directory for the CSV files")
    parser.add_argument("--threads", type=int, help="Worker processes per scenario")
    parser.add_argument("--trials", type=int, help="Override the trial count of every config")
    parser.add_argument("--no-gnuplot", action="store_true", help="Skip gnuplot data files")

    args = parser.parse_args()

    # Check if setup is needed
    if not os.path.exists(".env"):
        logger.info("Environment not set up. Running setup...")
        subprocess.run([sys.executable, "setup.py"])

    sys.exit(
        1 if run_all(args.out_dir, args.threads, args.trials, not args.no_gnuplot) else 0
    )


if __name__ == "__main__":
    main()
