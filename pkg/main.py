"""
Example usage of the sparse-JT simulator.
This script walks through one realization of a small C-RAN.
"""

import logging

from sparse_jt import SparseJTSimulator
from sparse_jt.baselines import network_zf, rcc_zf, sc_zf
from sparse_jt.config import Config, SolverSettings, preset
from sparse_jt.errors import ConfigError, SparseJTError
from sparse_jt.se_metrics import se_lower_bound, sinr_true
from sparse_jt.solver import solve


def main():
    """Main function demonstrating the simulator."""
    print("=== Sparse Joint Transmission C-RAN ===\n")

    try:
        config = Config()
        logging.basicConfig(level=config.log_level, format="%(asctime)s - %(levelname)s - %(message)s")
        print(config.display())

        cfg = preset("fig3-scaled")
        simulator = SparseJTSimulator(cfg, SolverSettings(), config)
        plan = simulator.plan
        print(f"✓ {cfg.L} RRHs x {cfg.N} antennas, {cfg.K} users, S={cfg.S}")
        print()

        # Example 1: Fronthaul plan
        print("--- Example 1: Fronthaul Plan ---")
        print(f"✓ CSI users per RRH U={plan.U[0]}, CSI bits B={plan.B[0]}, data bits B_bar={plan.B_bar[0]}")
        print(f"  Fronthaul load: CSI {plan.rate_csi[0]:.1f}, data {plan.rate_data[0]:.1f} "
              f"of {cfg.C_bits_per_use:.0f} bits/use")
        print()

        realization = simulator.realize(drop=0, fade=0)
        csit = realization.channels.csit()

        # Example 2: Sparse-JT solve
        print("--- Example 2: Sparse Joint Transmission ---")
        try:
            result = solve(csit, plan, cfg, simulator.settings)
            print(f"✓ Solver {result.status}: lambda={result.lam:.4g}, "
                  f"{result.outer_iters} multipliers, {result.inner_iters} power steps")
            print(f"  Active RRHs: {sorted(result.active)} (smooth count {result.sparsity:.2f})")
            print(f"  SE lower bound: {result.objective_bits:.3f} bits/s/Hz, "
                  f"second-order check: {result.second_order_pass}")
        except SparseJTError as e:
            result = None
            print(f"✗ Error solving sparse-JT: {e}")
        print()

        # Example 3: Baselines
        print("--- Example 3: Zero-Forcing Baselines ---")
        precoders = {}
        if result is not None:
            precoders["sparse_jt"] = result.f
        for name, build in (
            ("rcc_zf", lambda: rcc_zf(csit, plan, cfg)),
            ("zf", lambda: network_zf(csit, plan, cfg)),
            ("sc_zf", lambda: sc_zf(result, csit, cfg, plan)),
        ):
            if name == "sc_zf" and result is None:
                continue
            try:
                baseline = build()
                precoders[name] = baseline.f
                print(f"✓ {name}: active RRHs {sorted(baseline.active)}")
            except SparseJTError as e:
                print(f"✗ Error building {name}: {e}")
        print()

        # Example 4: Spectral efficiency
        print("--- Example 4: Spectral Efficiency ---")
        for name, f in precoders.items():
            bound = se_lower_bound(f, csit, plan, cfg).total
            true = sinr_true(realization.channels, f, plan, cfg).total
            print(f"  {name:<10} bound {bound:7.3f}   true {cfg.training_prefactor * true:7.3f} bits/s/Hz")
        print()

        print("=== Demo Complete ===")

    except ConfigError as e:
        print(f"✗ Configuration Error: {e}")
    except Exception as e:
        print(f"✗ Unexpected Error: {e}")


if __name__ == "__main__":
    main()
