"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
an "acceptance criteria" section at the end of the session.  The reference
Gset instance G43 is looked up in ``$GSET_DIR`` and then ``tests/data``.
"""
from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest

from fdcheck import REL_TOL, agent_pattern, fd_compare, make_batch
from maxcut_rl.cli import cmd_ablate, cmd_gen_er, cmd_solve, cmd_train, read_table
from maxcut_rl.graph import brute_force_maxcut, generate_er, load_graph
from maxcut_rl.policy import AgentParams, init_params
from maxcut_rl.ppo import TrainConfig, Trainer, ppo_loss_and_grad, ppo_losses
from maxcut_rl.rounding import GW_ALPHA, expected_cut_analytic, pgw
from maxcut_rl.sdp import default_rank, solve_sdp, sdp_objective

G43_AVG, G43_MAX = 6404.9, 6480
DATA_DIR = Path(__file__).parent / "data"


def find_g43() -> Path | None:
    dirs = [Path(os.environ["GSET_DIR"])] if os.environ.get("GSET_DIR") else []
    for d in dirs + [DATA_DIR]:
        for name in ("G43", "G43.txt", "g43.txt"):
            if (d / name).is_file():
                return d / name
    return None


@pytest.fixture(scope="module")
def g43():
    path = find_g43()
    if path is None:
        return None
    g = load_graph(path)
    t0 = time.perf_counter()
    e, rep = solve_sdp(g, tol=1e-5, seed=0)
    return g, e, rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def er_corpus(g43):
    """20 ER instances (n in {20, 100}) plus G43 when available, else a same-size stand-in."""
    out = []
    for i in range(20):
        n = 20 if i < 10 else 100
        p = (0.1, 0.3, 0.5)[i % 3]
        g = generate_er(n, p, 100 + i)
        e, rep = solve_sdp(g, seed=i)
        out.append((f"er_n{n}_p{p}_s{100 + i}", g, e, rep))
    if g43 is not None:
        out.append(("G43", g43[0], g43[1], g43[2]))
    else:
        g = generate_er(1000, 0.02, 43)
        e, rep = solve_sdp(g, seed=0)
        out.append(("er_n1000_p0.02_s43 (G43 absent)", g, e, rep))
    return out


def test_c1_g43_pgw_reproduction(g43, acceptance):
    name = "C1 G43 pGW within 1% of 6404.9 / 6480"
    if g43 is None:
        acceptance(name, False, "G43 not found in $GSET_DIR or tests/data; cannot evaluate")
    g, e, rep, solve_s = g43
    t0 = time.perf_counter()
    res = pgw(g, e, 256, np.random.default_rng(0))
    round_s = time.perf_counter() - t0
    ok = (abs(res.avg_cut - G43_AVG) <= 0.01 * G43_AVG and abs(res.max_cut - G43_MAX) <= 0.01 * G43_MAX
          and rep.converged and solve_s <= 300 and round_s <= 10)
    acceptance(name, ok, f"avg={res.avg_cut:.1f} max={res.max_cut} d={e.d} solve={solve_s:.0f}s "
                         f"rounding={round_s:.2f}s converged={rep.converged}")


def test_c2_gw_ratio(er_corpus, acceptance):
    bad = []
    for name, g, e, rep in er_corpus:
        if not rep.converged or not expected_cut_analytic(g, e) >= GW_ALPHA * sdp_objective(g, e):
            bad.append(name)
    worst = min(expected_cut_analytic(g, e) / sdp_objective(g, e) for _, g, e, _ in er_corpus)
    acceptance("C2 GW ratio E[cut] >= 0.878 * SDP", not bad,
               f"{len(er_corpus)} converged embeddings, min ratio {worst:.4f}, failures {bad}")


def test_c3_monte_carlo_consistency(er_corpus, acceptance):
    worst, degenerate, ok = 0.0, [], True
    for i, (name, g, e, _) in enumerate(er_corpus):
        res = pgw(g, e, 256, np.random.default_rng(7000 + i))
        sigma = res.cuts.std(ddof=1)
        analytic = expected_cut_analytic(g, e)
        dev = abs(res.avg_cut - analytic)
        if sigma > 0:
            worst = max(worst, dev / (4 * sigma / 16))
        else:
            # every rounding gave the same cut (e.g. a forest); the analytic value is then that
            # integer up to the solver tolerance, which no finite sample can resolve
            degenerate.append(name)
            ok &= res.cuts[0] == round(analytic) and dev <= 1e-4 * max(g.m, 1)
    acceptance("C3 |pGW avg - analytic| <= 4 sigma/16", ok and worst <= 1.0,
               f"{len(er_corpus)} instances, worst deviation {worst:.3f} of the bound; "
               f"zero-variance instances checked for exact agreement: {degenerate}")


def test_c4_small_instance_exactness(acceptance):
    bad, count = [], 0
    for i in range(30):
        n = 4 + i % 9
        p = (0.2, 0.5, 0.8)[i % 3]
        g = generate_er(n, p, 500 + i)
        if g.m == 0:
            g = generate_er(n, 0.8, 900 + i)
        best, _ = brute_force_maxcut(g)
        e, rep = solve_sdp(g, seed=i)
        res = pgw(g, e, 256, np.random.default_rng(i))
        count += 1
        if not (rep.converged and sdp_objective(g, e) >= best - 1e-6 and res.max_cut <= best):
            bad.append((n, p, 500 + i))
    acceptance("C4 SDP >= brute force >= pGW max on n <= 12", not bad, f"{count} instances, failures {bad}")


def test_c5_gradient_correctness(acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, skipped, checked = 0.0, 0, 0
    for c in range(100):
        d, l = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        _, new, batch = make_batch(d, l, int(rng.integers(2, 9)), seed=10_000 + c, drift=0.4)
        x0 = new.flat()
        grads = ppo_loss_and_grad(new, batch)[-1]

        def f(x):
            return ppo_losses(AgentParams.from_flat(x, d, l), batch)[2]

        def pattern(x):
            return agent_pattern(AgentParams.from_flat(x, d, l), batch, 0.2)

        w, n_ok, n_skip = fd_compare(f, pattern, x0, grads.flat())
        worst, checked, skipped = max(worst, w), checked + n_ok, skipped + n_skip
    elapsed = time.perf_counter() - t0
    acceptance("C5 L_agent gradient vs central differences", worst < REL_TOL and elapsed < 60,
               f"100 configs, {checked} coordinates checked, {skipped} kink-adjacent skipped, "
               f"max rel err {worst:.2e}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c6_agent_beats_pgw(tmp_path, acceptance):
    t0 = time.perf_counter()
    results = []
    for seed in range(1, 6):
        gp = cmd_gen_er(100, 0.1, seed, tmp_path / f"er100_s{seed}.json")
        emb, _ = cmd_solve(gp, cache_dir=tmp_path / "cache")
        results.append(cmd_train(gp, emb, out_dir=tmp_path / f"run{seed}"))
    elapsed = time.perf_counter() - t0
    avg_wins = sum(r["agent_avg"] > r["pgw_avg"] for r in results)
    max_wins = sum(r["agent_max"] >= r["pgw_max"] for r in results)
    detail = "; ".join(f"s{i + 1} {r['agent_avg']:.1f}/{r['agent_max']} vs {r['pgw_avg']:.1f}/{r['pgw_max']}"
                       for i, r in enumerate(results))
    acceptance("C6 agent vs pGW on 5 ER(100, 0.1)", avg_wins >= 4 and max_wins >= 4 and elapsed <= 1800,
               f"avg wins {avg_wins}/5, max ties-or-wins {max_wins}/5, {elapsed:.0f}s [{detail}]")


def test_c7_telescoping(acceptance):
    g = generate_er(30, 0.3, 3)
    e, _ = solve_sdp(g, seed=3)
    cfg = TrainConfig(K=64, T=96, t_step=16, minibatch=128, n_epochs=2, seed=5)
    tr = Trainer(g, e, cfg, init_params(e.d, 32, 5))
    windows, ok = 0, True
    start = tr.chains.cut.copy()
    total = np.zeros(cfg.K, dtype=np.int64)
    for _ in range(cfg.T):
        version = tr.version
        tr.step()
        # the update (if any) has already consumed the buffer; read the last transition from it otherwise
        last = tr.buffer[-1] if tr.buffer else None
        if last is not None:
            r = last.reward
            ok &= bool(np.all(r == np.round(r)))
            total += r.astype(np.int64)
        if tr.version != version:
            windows += 1
            start, total = tr.chains.cut.copy(), np.zeros(cfg.K, dtype=np.int64)
        else:
            ok &= bool(np.array_equal(total, tr.chains.cut - start))
    acceptance("C7 sum of rewards telescopes to cut difference", ok and windows == cfg.T // cfg.t_step,
               f"{windows} update windows on K={cfg.K} chains, exact integer equality")


def test_c8_determinism(tmp_path, acceptance):
    gp = cmd_gen_er(40, 0.2, 8, tmp_path / "er40.json")
    emb, _ = cmd_solve(gp, cache_dir=tmp_path / "cache")
    flags = dict(K=64, T=64, l=32, t_step=16, minibatch=128, seed=3, out_dir=tmp_path / "run")
    cmd_train(gp, emb, **flags)
    first = (tmp_path / "run" / "metrics.csv").read_bytes()
    cmd_train(gp, emb, **flags)
    second = (tmp_path / "run" / "metrics.csv").read_bytes()
    acceptance("C8 byte-identical metrics CSV", first == second,
               f"two deterministic runs, {len(first)} bytes each" if first == second else "CSV bytes differ")


@pytest.mark.slow
def test_c9_ablation(tmp_path, acceptance):
    gp = cmd_gen_er(100, 0.1, 1, tmp_path / "er100_s1.json")
    emb, _ = cmd_solve(gp, cache_dir=tmp_path / "cache")
    t0 = time.perf_counter()
    cmd_ablate(gp, emb, l_list=[64, 128, 256, 512, 1024], out_dir=tmp_path / "abl")
    rows = read_table(tmp_path / "abl" / "ablation.csv")
    ok = [r["l"] for r in rows] == ["64", "128", "256", "512", "1024"] and all(r["status"] == "ok" for r in rows)
    for col, agent, base in (("pct_increase_avg", "agent_avg", "pgw_avg"), ("pct_increase_max", "agent_max", "pgw_max")):
        a = np.array([float(r[agent]) for r in rows])
        b = np.array([float(r[base]) for r in rows])
        pct = np.array([float(r[col]) for r in rows])
        ok &= bool(np.all(b == b[0]))
        ok &= bool(np.allclose(pct, 100 * (a - b) / b, rtol=0, atol=1e-9))
        ok &= bool(np.all(np.sign(pct) == np.sign(a - b)))
        # one shared baseline per table, so % must order rows exactly as the raw agent column does
        ok &= bool(np.all(np.sign(np.subtract.outer(pct, pct)) == np.sign(np.subtract.outer(a, a))))
    summary = ", ".join(f"l={r['l']}: {float(r['pct_increase_avg']):+.2f}%/{float(r['pct_increase_max']):+.2f}%"
                        for r in rows)
    acceptance("C9 ablation over hidden sizes", ok, f"{time.perf_counter() - t0:.0f}s; {summary}")
