"""
Example walk-through of one hybrid link: beam training, pilot estimation, ZF precoding.
"""

import argparse
import logging
import os
import sys

import numpy as np

# Add the parent directory to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from models.aoa_beam_training import NoiseConfig, train_beamformers
from models.array_channel import AngleLaw, RicianConfig, SystemDims, generate_channels
from models.impairments import ImpairmentProfile, corollary5_gap, impaired_pilot_reception
from models.pilot_equalization import (
    closed_form_mse,
    generate_orthogonal_pilots,
    ls_estimate,
    normalized_mse,
    true_equivalent_channel,
    uplink_pilot_reception,
)
from models.zf_precoding import downlink_sinr, hybrid_rate_upper_bound, zf_precoder
from utils.random_utils import db_to_linear

# Configure logging
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)


def run_link(dims, kappa, snr_db, pilot_snr_db, seed):
    """
    Run the three estimation steps and ZF precoding on one channel draw.

    Args:
        dims (SystemDims): System sizes.
        kappa (float): Rician factor.
        snr_db (float): Downlink SNR in dB.
        pilot_snr_db (float): Pilot SNR in dB.
        seed (int): Seed of the random streams.
    """
    rng = np.random.default_rng(seed)
    channels = generate_channels(dims, RicianConfig(kappa=kappa), rng, rng, law=AngleLaw.GRID)
    logger.info(f"User BS-side angles (deg): {np.round(np.degrees([c.theta for c in channels]), 2)}")

    beams = train_beamformers(channels, dims, NoiseConfig(tone_energy=100.0), rng)
    logger.info(f"Selected BS grid indices: {beams.bs_grid_idx}")

    pilot_energy = db_to_linear(pilot_snr_db)
    pilots = generate_orthogonal_pilots(dims.N, pilot_energy)
    received = uplink_pilot_reception(channels, beams, pilots, NoiseConfig(), rng)
    estimate = ls_estimate(received, pilots)
    truth = true_equivalent_channel(channels, beams)

    snr = db_to_linear(snr_db)
    precoder = zf_precoder(estimate)
    sinr = downlink_sinr(truth, precoder, snr)
    bound = hybrid_rate_upper_bound(beams.F_RF, kappa, dims, snr)

    profile = ImpairmentProfile.from_settings(
        a=np.radians(3.0), b=np.radians(3.0), var_aoa_bs=0.0, var_aoa_ms=0.0, delta2=0.0,
        n_elems=dims.M,
    )
    impaired = impaired_pilot_reception(
        channels, beams, pilots, profile, NoiseConfig(sigma2_bs=0.0), rng
    )
    impaired_sinr = downlink_sinr(
        impaired.impaired_truth, zf_precoder(impaired.estimate), snr
    )

    print(f"\nEstimation MSE: {normalized_mse(estimate, truth, dims):.3e} "
          f"(closed form {closed_form_mse(1.0, pilot_energy, dims.M, dims.P):.3e})")
    print(f"Per-user rate: {np.mean(np.log2(1 + sinr)):.3f} bits/s/Hz (bound {bound:.3f})")
    print(f"With 3 degree phase errors: {np.mean(np.log2(1 + impaired_sinr)):.3f} bits/s/Hz "
          f"(high-SNR loss {corollary5_gap(profile.xi_hat):.4f})")


def main():
    """Main function."""
    parser = argparse.ArgumentParser(description="Example run of one hybrid mmWave link")
    parser.add_argument("--M", type=int, default=100, help="BS antennas")
    parser.add_argument("--P", type=int, default=16, help="User antennas")
    parser.add_argument("--N", type=int, default=4, help="Users")
    parser.add_argument("--kappa", type=float, default=2.0, help="Rician factor")
    parser.add_argument("--snr-db", type=float, default=10.0, help="Downlink SNR in dB")
    parser.add_argument("--pilot-snr-db", type=float, default=10.0, help="Pilot SNR in dB")
    parser.add_argument("--seed", type=int, default=0, help="Random seed")

    args = parser.parse_args()
    dims = SystemDims(M=args.M, P=args.P, N=args.N)
    run_link(dims, args.kappa, args.snr_db, args.pilot_snr_db, args.seed)


if __name__ == "__main__":
    main()
