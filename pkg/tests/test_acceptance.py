"""Acceptance criteria, each checked at its stated tolerance and time budget.

Every test prints one PASS/FAIL line; pytest repeats them in a summary
section at the end of the run.
"""

import time

import numpy as np
import pytest

from boros import netsim
from boros.harness import account_costs, library, run_scenario
from boros.harness.fuzz import fuzz
from boros.harness.oracle import compare_to_oracle
from conftest import ACCEPTANCE

FUZZ_BASES = ("cc-transfer", "join", "withdraw", "close")
PUBLISHED_PN = {200: 2.77, 1000: 3.55}
LARGE_PAIRS = 5_000


def record(name: str, ok: bool, detail: str, seconds: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({seconds:.1f} s)"
    ACCEPTANCE.append(line)
    print(line)


@pytest.fixture(scope="module")
def fuzz_reports():
    t0 = time.perf_counter()
    reports = {base: fuzz(base, 1000, seed=1) for base in FUZZ_BASES}
    return reports, time.perf_counter() - t0


@pytest.fixture(scope="module")
def small_networks():
    t0 = time.perf_counter()
    res = {(n, a): netsim.evaluate(n, 4, a, 200, seeds=range(10), pairs=100_000)
           for n in (200, 1000) for a in (0.05, 0.15)}
    return res, time.perf_counter() - t0


def test_operation_costs():
    t0 = time.perf_counter()
    got = {op: account_costs(run_scenario(build(), observe=False)).triple()
           for op, (build, _) in library.OPERATION_COSTS.items()}
    elapsed = time.perf_counter() - t0
    wrong = {op: (got[op], want) for op, (_, want) in library.OPERATION_COSTS.items() if got[op] != want}
    ok = not wrong and elapsed < 1
    record("operation costs", ok, f"{len(got) - len(wrong)}/{len(got)} rows exact"
           + (f", mismatches {wrong}" if wrong else ""), elapsed)
    assert ok


def test_oracle_equivalence():
    corpus = library.corpus()
    t0 = time.perf_counter()
    bad = [name for name, s in corpus.items() if not compare_to_oracle(s)]
    elapsed = time.perf_counter() - t0
    ok = len(corpus) >= 20 and not bad and elapsed < 5
    record("oracle equivalence", ok, f"{len(corpus) - len(bad)}/{len(corpus)} scenarios equal"
           + (f", differing {bad}" if bad else ""), elapsed)
    assert ok


def test_fuzz_properties(fuzz_reports):
    reports, elapsed = fuzz_reports
    counts = {base: r.counts() for base, r in reports.items()}
    violations = sum(c[p] for c in counts.values() for p in ("P1", "P2", "P3", "INV"))
    runs = sum(r.runs for r in reports.values())
    ok = violations == 0 and all(r.runs == 1000 for r in reports.values()) and elapsed < 60
    record("adversarial fuzz", ok, f"{runs} runs over {len(reports)} bases, "
           f"{violations} P1/P2/P3 violations", elapsed)
    assert ok, counts


def test_dispute_liveness(fuzz_reports):
    reports, elapsed = fuzz_reports
    disputed = sum(r.disputed for r in reports.values())
    late = [f for r in reports.values() for _, fs in r.failures for f in fs
            if f.prop == "P3"]
    ok = disputed > 0 and not late
    record("dispute liveness", ok, f"{disputed} fuzzed traces with honest complaints, "
           f"{len(late)} late or underpaid", elapsed)
    assert ok


def test_hub_invariants():
    from test_hub import test_escrow_and_commitment_invariants_under_random_ops as walk

    t0 = time.perf_counter()
    try:
        walk()
        ok, detail = True, "10000 operations, escrow and commitment exact at every step"
    except AssertionError as exc:
        ok, detail = False, f"violated: {exc}"
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 10
    record("hub ledger invariants", ok, detail, elapsed)
    assert ok


def test_path_length_trends(small_networks):
    res, elapsed = small_networks
    order = all(r.mean[("ch", "sp")] < r.mean[("ph", "sp")] < r.mean[("pn", "sp")]
                for r in res.values())
    climb = res[(1000, 0.15)].delta2() > res[(200, 0.05)].delta2()
    pn = {n: res[(n, 0.05)].mean[("pn", "sp")] for n in (200, 1000)}
    band = all(abs(pn[n] - PUBLISHED_PN[n]) <= 0.6 for n in pn)
    ok = order and climb and band and elapsed < 300
    detail = (f"CH<PH<PN {'holds' if order else 'broken'}; "
              f"Δ2 {res[(200, 0.05)].delta2():.1f}% -> {res[(1000, 0.15)].delta2():.1f}%; "
              f"PN {pn[200]:.2f} (n=200), {pn[1000]:.2f} (n=1000)")
    record("path-length trends", ok, detail, elapsed)
    assert ok


def test_multi_hub_path_lengths():
    t0 = time.perf_counter()
    hubs = netsim.hub_count(5000, 0.10, 200)
    res = netsim.evaluate(5000, 4, 0.10, 200, seeds=range(10), pairs=LARGE_PAIRS)
    per_seed = zip(*(res.per_seed[(k, "sp")] for k in ("ch", "ph", "pn")))
    ordered = sum(ch < ph < pn for ch, ph, pn in per_seed)
    elapsed = time.perf_counter() - t0
    ok = hubs == 3 and res.hubs == 3 and ordered >= 9 and elapsed < 600
    record("multi-hub path lengths", ok, f"{hubs} hubs, CH<PH<PN in {ordered}/10 seeds", elapsed)
    assert ok


def test_embedding_dominance():
    t0 = time.perf_counter()
    t = netsim.gen_topology(500, 4, 42)
    pairs = netsim.sample_pairs(500, 1000, np.random.default_rng(42))
    shortest = netsim.pair_distances(t, None, pairs)
    emb = netsim.Embedding(t)
    gaps, stuck = [], 0
    for (s, d), best in zip(pairs, shortest):
        try:
            gaps.append(emb.route(int(s), int(d)) - best)
        except netsim.RoutingStuck:
            stuck += 1
    elapsed = time.perf_counter() - t0
    ok = bool(gaps) and min(gaps) >= 0 and float(np.mean(gaps)) > 0
    record("embedding dominance", ok, f"{len(gaps)} routed, {stuck} stuck, min gap "
           f"{min(gaps):.0f}, mean gap {np.mean(gaps):.2f} hops", elapsed)
    assert ok
