import pytest

from agents.triad_selector import select_triad
from models.responses import Branch
from models.schemas import MockConfig, PipelineConfig, Role, Thresholds, Vote
from services.comparison_engine import RequestKind
from services.mock_engine import MockEngine, MockFixture, mock_vote
from services.reference_bank import deduplicate, load_bank
from tests.conftest import ScriptedEngine
from utils.caching import ResponseCache
from utils.dataset import load_dataset
from utils.exceptions import FixtureError
from utils.metrics import compute_metrics, count_outcomes, exact_metrics
from workflows.pair_pipeline import PairPipeline, run_dataset, run_pair, trace_digest

A, B, X = Vote.A, Vote.B, Vote.ABSTAIN


@pytest.fixture
def inputs(synthetic_run):
    bank, _ = deduplicate(load_bank(synthetic_run.manifest), 0.99)
    return bank, load_dataset(synthetic_run.dataset)


def mock_engine(pairs, q=1.0, seed=7, **overrides):
    config = MockConfig(reliability={role: q for role in Role}, adjudicator_reliability=q, **overrides)
    return MockEngine(MockFixture.from_pairs(pairs, config), seed=seed)


def open_thresholds(**overrides):
    return PipelineConfig(thresholds=Thresholds(p=0, t=0, m=0), **overrides)


async def test_reliable_mock_answers_every_pair_correctly(inputs):
    bank, pairs = inputs
    results = await run_dataset(open_thresholds(), bank, pairs, mock_engine(pairs))
    for result, pair in zip(results, pairs):
        assert (result.final_1, result.final_2) == (pair.truth(1), pair.truth(2))
        assert not result.adjudicated
        assert result.decision_1.branch is Branch.MARGIN_WIN
        assert result.final_1 is result.decision_1.label
    report = compute_metrics(results, pairs)
    assert report.set_accuracy == 1.0
    assert report.confusion_rate == 0.0


async def test_collapse_onto_one_answer_triggers_pair_adjudication(inputs):
    bank, pairs = inputs

    def reply(request):
        if request.kind is RequestKind.PAIR:
            return "Final Answer Image1: A\nFinal Answer Image2: B\n"
        return "Answer: A\nConfidence: 90\n"

    engine = ScriptedEngine(reply)
    result = await run_pair(PipelineConfig(), bank, pairs[0], engine)
    assert (result.decision_1.label, result.decision_2.label) == (A, A)
    assert result.adjudicated
    assert (result.final_1, result.final_2) == (A, B)
    stages = [event["stage"] for event in result.trace]
    assert stages.count("pair_adjudicate") == 1
    assert stages[-1] == "final"
    pair_requests = [r for r in engine.requests if r.kind is RequestKind.PAIR]
    assert len(pair_requests) == 1 and pair_requests[0].query_id == pairs[0].pair_id


async def test_zero_mass_reaches_pair_adjudication_through_ambiguity(inputs):
    bank, pairs = inputs
    engine = ScriptedEngine(lambda r: "garbled" if r.kind is RequestKind.PAIR else "Answer: B\nConfidence: 10\n")
    result = await run_pair(PipelineConfig(), bank, pairs[0], engine)
    assert result.decision_1.branch is Branch.INSUFFICIENT_MASS
    assert result.posterior_1 is None and result.posterior_2 is None
    assert result.adjudicated
    assert (result.final_1, result.final_2) == (X, X)
    trigger = next(e for e in result.trace if e["stage"] == "pair_trigger")
    assert trigger["data"]["triggered"] is True
    adjudication = next(e for e in result.trace if e["stage"] == "pair_adjudicate")
    assert adjudication["data"]["parsed"] is False


async def test_pair_adjudicator_can_be_switched_off(inputs):
    bank, pairs = inputs
    engine = ScriptedEngine("Answer: A\nConfidence: 90\n")
    result = await run_pair(PipelineConfig(use_pair_adjudicator=False), bank, pairs[0], engine)
    assert not result.adjudicated
    assert (result.final_1, result.final_2) == (A, A)
    assert all(r.kind is RequestKind.PAIRWISE for r in engine.requests)


async def test_low_margin_goes_to_text_adjudicator_or_sign(inputs):
    bank, pairs = inputs
    replies = {Role.ANCHOR: "Answer: A\nConfidence: 60\n", Role.HARD_NEGATIVE: "Answer: B\nConfidence: 50\n"}

    def reply(request):
        if request.kind is RequestKind.PAIRWISE:
            return replies.get(request.role, "Answer: -\nConfidence: 0\n")
        if request.kind is RequestKind.AGGREGATE:
            return "Final Answer: B\n"
        return "Final Answer Image1: B\nFinal Answer Image2: A\n"

    config = PipelineConfig(use_pair_adjudicator=False)
    text = await run_pair(config, bank, pairs[0], ScriptedEngine(reply))
    assert text.decision_1.branch is Branch.TEXT_ADJUDICATED and text.final_1 is B

    sign = await run_pair(config.model_copy(update={"use_text_adjudicator": False}), bank, pairs[0], ScriptedEngine(reply))
    assert sign.decision_1.branch is Branch.MARGIN_ONLY and sign.final_1 is A
    assert "margin_only" in [e["stage"] for e in sign.trace]


async def test_dropped_role_is_never_compared(inputs):
    bank, pairs = inputs
    engine = mock_engine(pairs)
    result = await run_pair(PipelineConfig(drop_roles=(Role.BOUNDARY_PROBE,)), bank, pairs[0], engine)
    assert [o.role for o in result.outcomes_1] == [Role.ANCHOR, Role.HARD_NEGATIVE]


async def test_runs_are_deterministic_and_replay_from_cache(inputs):
    bank, pairs = inputs
    config = PipelineConfig(seed=7)
    cache = ResponseCache()
    first = await run_dataset(config, bank, pairs, mock_engine(pairs, q=0.7), cache)
    second = await run_dataset(config, bank, pairs, mock_engine(pairs, q=0.7))
    assert [r.trace_digest for r in first] == [r.trace_digest for r in second]

    cold = mock_engine(pairs, q=0.7)
    replayed = await run_dataset(config, bank, pairs, cold, cache)
    assert cold.calls == 0
    assert [r.model_dump() for r in replayed] == [r.model_dump() for r in first]


async def test_trace_digest_matches_recorded_events(inputs):
    bank, pairs = inputs
    result = await run_pair(PipelineConfig(), bank, pairs[1], mock_engine(pairs, q=0.6))
    assert result.trace_digest == trace_digest(result.trace)
    for index in (1, 2):
        stages = [e["stage"] for e in result.trace if e["image"] == index]
        assert stages[:4] == ["select", "compare", "aggregate", "decide"]
        assert stages[-1] == "posterior"
    assert [e["stage"] for e in result.trace if e["image"] is None][0] == "pair_trigger"
    assert result.trace[-1]["stage"] == "final"


async def test_metrics_can_be_recomputed_from_traces(inputs):
    bank, pairs = inputs
    results = await PairPipeline(bank, mock_engine(pairs, q=0.6), PipelineConfig()).run_dataset(pairs)
    report = compute_metrics(results, pairs)

    rows = []
    adjudicated = 0
    for result in results:
        final = result.trace[-1]["data"]
        rows.append(tuple(Vote(final[key]) for key in ("final_1", "final_2", "truth_1", "truth_2")))
        adjudicated += final["adjudicated"]
    audited = exact_metrics(count_outcomes(rows, adjudicated))
    assert {name: float(value) for name, value in audited.items()} == report.metrics()
    assert report.coverage + report.abstention_rate == pytest.approx(1.0)


async def test_image_shared_across_questions_gets_a_triad_per_question(inputs):
    bank, pairs = inputs
    ct_pair = pairs[1]
    mri_pair = pairs[0].model_copy(
        update={"pair_id": "mri_reuse", "image_1": ct_pair.image_1, "answer_1": ct_pair.answer_1}
    )
    assert "CT" in ct_pair.question and "MRI" in mri_pair.question

    pipeline = PairPipeline(bank, ScriptedEngine("Answer: A\nConfidence: 90\n"), PipelineConfig())
    results = await pipeline.run_dataset([ct_pair, mri_pair])
    selected = [next(e["data"] for e in r.trace if e["stage"] == "select" and e["image"] == 1) for r in results]
    assert [s["modality"] for s in selected] == ["CT", "MRI"]

    ctx = mri_pair.query_context(1)
    fresh = select_triad(bank, ctx, pipeline.config.selection, retrieval=pipeline.config.retrieval)
    assert pipeline.triad_for(ctx).to_record() == fresh.to_record()
    assert selected[1] == fresh.to_record()


def test_mock_fixture_rejects_conflicting_answers_for_a_shared_image(inputs):
    _, pairs = inputs
    clash = pairs[0].model_copy(update={"pair_id": "clash", "image_1": pairs[1].image_1, "answer_1": "A"})
    assert pairs[1].answer_1 == "B"
    with pytest.raises(FixtureError, match="conflicting answers"):
        MockFixture.from_pairs([pairs[1], clash])
    agreeing = clash.model_copy(update={"answer_1": "B"})
    assert MockFixture.from_pairs([pairs[1], agreeing]).label(pairs[1].image_1.id) is B


async def test_coin_flip_mock_matches_direct_simulation_of_its_draws(inputs):
    bank, pairs = inputs
    config = PipelineConfig(
        thresholds=Thresholds(p=0, t=0, m=0),
        seed=7,
        use_text_adjudicator=False,
        use_pair_adjudicator=False,
    )
    engine = mock_engine(pairs, q=0.5, seed=7)
    results = await run_dataset(config, bank, pairs, engine)
    report = compute_metrics(results, pairs)

    rows = []
    correct_votes = total_votes = 0
    for pair in pairs:
        finals = []
        for index in (1, 2):
            ctx = pair.query_context(index)
            triad = select_triad(bank, ctx, config.selection, retrieval=config.retrieval)
            signed = 0
            for member in triad.members:
                vote, confidence = mock_vote(engine.fixture, 7, ctx.query_id, member.entry.id, member.role)
                signed += confidence if vote is A else -confidence
                correct_votes += vote is pair.truth(index)
                total_votes += 1
            finals.append(A if signed > 0 else B if signed < 0 else X)
        rows.append((*finals, pair.truth(1), pair.truth(2)))

    simulated = exact_metrics(count_outcomes(rows, 0))
    assert {name: float(value) for name, value in simulated.items()} == report.metrics()

    # Per-vote correctness stays inside a 4-sigma envelope around q = 0.5.
    sigma = (total_votes * 0.25) ** 0.5
    assert abs(correct_votes - total_votes / 2) <= 4 * sigma
    images = 2 * len(pairs)
    answered = round(report.individual_accuracy * images)
    assert abs(answered - images / 2) <= 4 * (images * 0.25) ** 0.5


async def test_dropping_every_role_leaves_the_pair_adjudicator_alone(inputs):
    bank, pairs = inputs
    engine = ScriptedEngine("Final Answer Image1: B\nFinal Answer Image2: A\n")
    config = PipelineConfig(drop_roles=tuple(Role))
    result = await run_pair(config, bank, pairs[1], engine)
    assert result.outcomes_1 == [] and result.outcomes_2 == []
    assert result.decision_1.branch is Branch.INSUFFICIENT_MASS
    assert result.adjudicated
    assert (result.final_1, result.final_2) == (B, A)
    assert [r.kind for r in engine.requests] == [RequestKind.PAIR]
