"""Smoke test for the Python bindings: OPF, one environment step, a short
training run and the baseline comparison."""

import pathlib
import tempfile

import microdispatch as md

ROOT = pathlib.Path(__file__).resolve().parent.parent
CASE = ROOT / "cases" / "mg10.case"
DAY = ROOT / "data" / "mg10_day.csv"


def main():
    net = md.Network.load(str(CASE))
    assert net.n_bus == 10
    assert net.generators == ["mt", "de"]
    assert net.action_space_size(9) == 36
    assert abs(net.fuel_cost(0, 30.0) - 2.050) < 1e-3

    sol = net.opf([True, True], 0.0, 12.0, 18.0, 80.0, 38.75, 0.1)
    assert sol["converged"], sol
    assert sol["max_mismatch"] < 1e-6
    assert len(sol["v"]) == 10
    print(f"opf objective {sol['objective']:.4f} in {sol['iterations']} iterations")

    reward, penalty, p_bat = net.first_step(13, 12.0, 18.0, 80.0, 38.75, 0.1)
    assert penalty == "None" and reward < 0.0
    print(f"first step reward {reward:.4f}, battery {p_bat:.2f} kW")

    text = md.canonical_case(str(CASE))
    assert "[generators]" in text

    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "run.toml"
        cfg.write_text(
            f"seed = 3\n[paths]\nnetwork = {str(CASE)!r}\ntimeseries = {str(DAY)!r}\n"
            f"out_dir = {tmp!r}\n[run]\nepochs = 5\n"
        )
        ckpt = md.Checkpoint.load(md.train(str(cfg)))
        assert ckpt.widths == [7, 50, 100, 100, 50, 36]
        features = [0, 0, 12.0, 18.0, 80.0, 0.1, 0.5]
        q = ckpt.q_values(features)
        assert len(q) == 36 and ckpt.act(features) == max(range(36), key=lambda a: (q[a], -a))
        rows = md.compare(str(cfg))
        policies = [r[1] for r in rows]
        assert policies == ["dqn", "myopic", "dp"], policies
        dp = rows[2]
        assert dp[3] == 0.0
        print("compare:", ", ".join(f"{p} {c:.3f}" for _, p, c, _ in rows))
    print("smoke test passed")


if __name__ == "__main__":
    main()
