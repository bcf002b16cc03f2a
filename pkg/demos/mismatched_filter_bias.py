"""What does running a Kalman filter with the wrong dynamics cost?

A scalar state follows x_n = 0.9 x_{n-1} + noise, but the filter is
designed for a slower decay a_f.  The error moment recursion splits the
resulting MSE into a bias part (the squared mean error, driven by the
deterministic transient the filter tracks wrongly) and a variance part
(the error covariance, inflated by the suboptimal gain).  A Monte Carlo
run confirms the analytic curves for the worst mismatch.

Run:  python3 demos/mismatched_filter_bias.py [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from slds_mse import (
    FilterSpec,
    GaussianBelief,
    MarkovChain,
    MeasurementModel,
    ModeModel,
    SldsModel,
    mismatch_series,
    run_monte_carlo,
    write_line_chart,
)

A_TRUE = 0.9
A_FILTERS = (0.9, 0.8, 0.65, 0.46)
N_STEPS = 12
N_SETTLE = 60
MC_SAMPLES = 200000


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo-output",
                        help="directory for the SVG artifact")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    truth = ModeModel(A=np.array([[A_TRUE]]), Q=np.array([[0.01]]))
    meas = MeasurementModel(H=np.array([[1.0]]), R=np.array([[0.01]]))
    init = GaussianBelief(mean=np.array([1.0]), cov=np.array([[1.0]]))

    print(f"truth a = {A_TRUE}, x_0 ~ N(1, 1), Q = R = 0.01")
    print("\nMSE by step for each filter design value a_f "
          "(bias^2 + variance):")
    curves = {}
    for a_f in A_FILTERS:
        filt = ModeModel(A=np.array([[a_f]]), Q=truth.Q)
        curves[a_f] = mismatch_series(truth, filt, meas, init, N_SETTLE)[0]
    print(f"{'step':>4}" + "".join(f"  {'a_f=' + format(a_f, '.2f'):>21}"
                                   for a_f in A_FILTERS))
    for step in range(N_STEPS + 1):
        row = f"{step:>4}"
        for a_f in A_FILTERS:
            m = curves[a_f][step]
            bias_sq = float(m.e_mean @ m.e_mean)
            var = float(np.trace(m.e_cov))
            row += f"  {bias_sq:>10.5f} +{var:>8.5f}"
        print(row)

    matched = curves[A_TRUE][N_SETTLE].mse
    print(f"\nsettled MSE penalty over the matched filter "
          f"(step {N_SETTLE}):")
    for a_f in A_FILTERS[1:]:
        penalty = curves[a_f][N_SETTLE].mse / matched - 1.0
        print(f"  a_f = {a_f:.2f}: +{100 * penalty:.1f}%")
    print("\nthe bias term is a transient: it decays with the mismatch "
          "dynamics (I - KH) a_f,\nwhile the variance penalty from the "
          "miscomputed gain persists in steady state.")

    # Monte Carlo check for the worst mismatch.  A two-mode system with
    # an absorbing chain locked to mode 1 keeps the state on the truth
    # dynamics while the mode-2 filter spec supplies the wrong design.
    worst = A_FILTERS[-1]
    pair = SldsModel(
        modes=(truth, ModeModel(A=np.array([[worst]]), Q=truth.Q)),
        meas=meas,
        chain=MarkovChain(Z=np.eye(2), prior=np.array([1.0, 0.0])),
        init=init)
    run, = run_monte_carlo(pair, [FilterSpec(kind="single-mode", mode=2)],
                           None, N_STEPS, MC_SAMPLES, seed=1)
    analytic = np.array([m.mse for m in curves[worst][:N_STEPS + 1]])
    z = np.abs(analytic[1:] - run.mse()[1:]) / run.mse_stderr()[1:]
    print(f"\nMonte Carlo check for a_f = {worst} ({MC_SAMPLES} samples): "
          f"worst deviation {z.max():.2f} standard errors")

    svg_path = out / "mismatch_penalty.svg"
    write_line_chart(
        svg_path,
        [(f"a_f={a_f:.2f}", range(N_STEPS + 1),
          [m.mse for m in curves[a_f][:N_STEPS + 1]])
         for a_f in A_FILTERS]
        + [(f"a_f={worst:.2f} (mc)", range(N_STEPS + 1), run.mse())],
        title=f"Filter mismatch penalty, truth a={A_TRUE}",
        dashed={f"a_f={worst:.2f} (mc)"})
    print(f"wrote {svg_path}")


if __name__ == "__main__":
    main()
