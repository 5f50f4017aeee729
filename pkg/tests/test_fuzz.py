import pytest

from boros.harness import run_scenario
from boros.harness.fuzz import (BASES, CORRUPTIONS, LAST_DIRECTIVE, PARTIES, fuzz,
                                random_scenario, with_epilogue)
from boros.harness import library


def test_corruptions_are_proper_subsets():
    assert frozenset() in CORRUPTIONS
    assert frozenset(PARTIES) not in CORRUPTIONS
    assert len(CORRUPTIONS) == 2 ** len(PARTIES) - 1


def test_random_scenarios_are_reproducible():
    a, b = random_scenario("cc-transfer", 99), random_scenario("cc-transfer", 99)
    assert a == b
    assert run_scenario(a).digest() == run_scenario(b).digest()
    assert all(d.round <= LAST_DIRECTIVE for d in a.adversary.directives)


def test_epilogue_settles_every_channel():
    s = with_epilogue(library.cc_transfer(), honest_first=frozenset("C"))
    closes = [st for st in s.script if st.kind == "close"]
    assert {st.fields["beta"] for st in closes} == {"ac", "bd"}
    assert [st.party for st in closes if st.fields["beta"] == "ac"][0] == "C"


@pytest.mark.parametrize("base", sorted(BASES))
def test_short_fuzz_campaign_is_clean(base):
    report = fuzz(base, 60, seed=5)
    assert report.runs == 60
    assert report.ok, report.failures[:3]


def test_fuzz_rejects_empty_campaign():
    with pytest.raises(ValueError):
        fuzz("join", 0)
