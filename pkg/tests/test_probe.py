import numpy as np
import pytest

from repsim.errors import ContractError, DegenerateTaskError, InvalidInputError, MissingLabelError
from repsim.probe import (
    LinearClassifier,
    ProbeDataset,
    ProbeSplits,
    eval_frame_probe,
    eval_utterance_probe,
    fit_logistic,
    mean_pool,
    phone_probe_splits,
    run_probe,
    speaker_probe_splits,
    write_probe_report,
)


def dataset(x, y, c):
    return ProbeDataset(np.asarray(x, dtype=float), np.asarray(y), c)


def separable_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = (2.0 * y - 1.0)[:, None] + 0.0 * rng.normal(size=(n, 1))
    return dataset(x, y, 2)


class TestFitLogistic:
    def test_separable_reaches_zero_train_error(self):
        train = separable_data()
        clf = fit_logistic(train, train, epochs=10, seed=0)
        assert clf.error_rate(train) == 0.0

    def test_identical_inputs_give_chance(self):
        rng = np.random.default_rng(1)
        c = 5
        y = rng.integers(0, c, 1000)
        x = np.ones((1000, 3))
        data = dataset(x, y, c)
        clf = fit_logistic(data, data, epochs=10, seed=0)
        err = clf.error_rate(data)
        assert abs(err - (1 - 1 / c)) < 0.05

    def test_deterministic_per_seed(self):
        train = separable_data(seed=3)
        c1 = fit_logistic(train, train, seed=9)
        c2 = fit_logistic(train, train, seed=9)
        c3 = fit_logistic(train, train, seed=10)
        assert np.array_equal(c1.weights, c2.weights)
        assert np.array_equal(c1.bias, c2.bias)
        assert not np.array_equal(c1.weights, c3.weights)

    def test_single_class_rejected(self):
        bad = dataset(np.ones((5, 2)), np.zeros(5, dtype=int), 3)
        with pytest.raises(DegenerateTaskError):
            fit_logistic(bad, bad)

    def test_empty_rejected(self):
        empty = dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 3)
        with pytest.raises(DegenerateTaskError):
            fit_logistic(empty, empty)

    def test_label_range_validated(self):
        with pytest.raises(InvalidInputError):
            dataset(np.ones((2, 2)), [0, 5], 3)


class TestEval:
    def test_perfect_predictor(self):
        data = separable_data(seed=4)
        clf = fit_logistic(data, data, seed=0)
        assert eval_frame_probe(clf, data) == 0.0

    def test_constant_predictor_counting(self):
        # zero weights, bias favouring class 0 -> everything predicted 0
        clf = LinearClassifier(np.zeros((2, 2)), np.array([1.0, 0.0]))
        data = dataset(np.ones((4, 2)), [0, 0, 1, 1], 2)
        assert eval_frame_probe(clf, data) == 0.5

    def test_tie_breaks_to_lowest_class(self):
        clf = LinearClassifier(np.zeros((2, 3)), np.zeros(3))
        data = dataset(np.ones((3, 2)), [0, 1, 2], 3)
        preds = clf.predict(data.x)
        assert np.all(preds == 0)

    def test_unlabeled_test_rejected(self):
        clf = LinearClassifier(np.zeros((2, 2)), np.zeros(2))
        empty = dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
        with pytest.raises(MissingLabelError):
            eval_frame_probe(clf, empty)

    def test_utterance_probe_single_wrong(self):
        clf = LinearClassifier(np.zeros((2, 2)), np.array([0.0, 1.0]))
        err = eval_utterance_probe(clf, [np.ones((5, 2))], np.array([0]))
        assert err == 1.0

    def test_utterance_probe_permutation_invariant(self):
        rng = np.random.default_rng(5)
        clf = LinearClassifier(rng.normal(size=(3, 4)), rng.normal(size=4))
        utt = rng.normal(size=(20, 3))
        shuffled = utt[rng.permutation(20)]
        e1 = eval_utterance_probe(clf, [utt], np.array([2]))
        e2 = eval_utterance_probe(clf, [shuffled], np.array([2]))
        assert e1 == e2


class TestSplits:
    def make_utterances(self, n_speakers=4, per_speaker=10, frames=12, d=5, seed=0):
        rng = np.random.default_rng(seed)
        reps, labels, speakers, splits = [], [], [], []
        for s in range(n_speakers):
            for u in range(per_speaker):
                reps.append(rng.normal(size=(frames, d)))
                labels.append(rng.integers(0, 3, frames))
                speakers.append(f"spk{s}")
                splits.append("test" if u == 0 else ("valid" if u == 1 else "train"))
        return reps, labels, speakers, splits

    def test_phone_split_sizes(self):
        reps, labels, speakers, splits = self.make_utterances()
        ps = phone_probe_splits(reps, labels, splits, num_phones=3, seed=0)
        n_test_utts = splits.count("test")
        assert ps.test.x.shape[0] == n_test_utts * 12
        total = ps.train.x.shape[0] + ps.valid.x.shape[0] + ps.test.x.shape[0]
        assert total == len(reps) * 12

    def test_phone_split_needs_labels(self):
        reps, labels, speakers, splits = self.make_utterances()
        labels[0] = None
        with pytest.raises(MissingLabelError):
            phone_probe_splits(reps, labels, splits, num_phones=3)

    def test_speaker_split_pools_and_maps(self):
        reps, labels, speakers, splits = self.make_utterances()
        ss = speaker_probe_splits(reps, speakers, splits)
        assert ss.train.x.shape[1] == 5
        assert ss.train.num_classes == 4
        pooled = mean_pool([reps[0]])
        assert np.allclose(ss.test.x[0], pooled[0])

    def test_unseen_test_speaker_rejected(self):
        reps, labels, speakers, splits = self.make_utterances()
        # last speaker only appears in test
        for i, s in enumerate(speakers):
            if s == "spk3":
                splits[i] = "test"
        with pytest.raises(ContractError):
            speaker_probe_splits(reps, speakers, splits)


class TestRawSyntheticBeatsChance:
    def test_probes_beat_chance_with_margin(self):
        # default-noise corpus, small class counts for speed: raw features
        # must beat chance by at least 0.1 on both tasks
        from repsim.corpus import SyntheticSpec, default_transition, synthesize_utterances

        spec = SyntheticSpec(
            seed=31, num_speakers=4, num_phones=6, utterances_per_speaker=10,
            min_seconds=0.3, max_seconds=0.5, transition=default_transition(6),
        )
        seqs = synthesize_utterances(spec)
        splits = (["train"] * 8 + ["valid", "test"]) * 4
        reps = [np.asarray(s.frames, dtype=np.float64) for s in seqs]
        phone = run_probe(
            "phone",
            phone_probe_splits(reps, [s.phone_labels for s in seqs], splits, 6, seed=0),
            base_seed=0, runs=2,
        )
        speaker = run_probe(
            "speaker",
            speaker_probe_splits(reps, [s.speaker_id for s in seqs], splits),
            base_seed=0, runs=2,
        )
        assert phone.error_rate < (1 - 1 / 6) - 0.1
        assert speaker.error_rate < (1 - 1 / 4) - 0.1


class TestRunProbe:
    def test_five_seeded_runs(self):
        data = separable_data(seed=6)
        splits = ProbeSplits(train=data, valid=data, test=data)
        result = run_probe("phone", splits, base_seed=3, runs=5)
        assert result.seeds == [3, 4, 5, 6, 7]
        assert len(result.per_run) == 5
        assert result.error_rate == pytest.approx(np.mean(result.per_run))
        assert result.error_std == pytest.approx(np.std(result.per_run))

    def test_parallel_matches_serial(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(300, 4))
        y = (x[:, 0] > 0).astype(int)
        data = dataset(x, y, 2)
        splits = ProbeSplits(train=data, valid=data, test=data)
        serial = run_probe("phone", splits, base_seed=0, runs=5)
        parallel = run_probe("phone", splits, base_seed=0, runs=5, jobs=2)
        assert serial.per_run == parallel.per_run

    def test_report_json(self, tmp_path):
        import json

        data = separable_data(seed=8)
        splits = ProbeSplits(train=data, valid=data, test=data)
        result = run_probe("speaker", splits, base_seed=0, runs=2)
        path = tmp_path / "report.json"
        write_probe_report(path, [result], model="m", checkpoint="m@9",
                           provenance={"seed": 0})
        obj = json.loads(path.read_text())
        entry = obj["results"][0]
        assert entry["task"] == "speaker"
        assert entry["model"] == "m"
        assert entry["checkpoint"] == "m@9"
        assert entry["split_sizes"]["train"] == 200
        assert obj["provenance"] == {"seed": 0}
