"""Shared test utilities: track builders, scripted backends, oracles.

The scripted backends answer by reading the caption log serialized into
the prompt, so synthetic benchmarks where captions literally determine
the answer are solvable without any model. A recording wrapper captures
transcripts for replay fixtures.
"""

from __future__ import annotations

import json
import random
import re
import threading
from fractions import Fraction

from egolog.corpus import Caption, CaptionTrack, Query, QueryKind
from egolog.llm import prompt_sha256, run_key


def make_track(
    video_id="v1", texts=None, n=6, step=2.0, clip_start=0.0, clip_end=None
):
    if texts is None:
        texts = [f"C does step {i} of the recipe" for i in range(n)]
    captions = [
        Caption(video_id, clip_start + i * step, clip_start + (i + 1) * step, text)
        for i, text in enumerate(texts)
    ]
    if clip_end is None:
        clip_end = clip_start + len(texts) * step
    return CaptionTrack.build(video_id, captions, clip_start, clip_end)


_CAPTION_LINE = re.compile(r"^(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?): (.*)$")
_QA_QID = re.compile(r"^Question \(qid (.+?)\): ", re.MULTILINE)
_OPTION = re.compile(r"^\(([A-E])\) (.*)$", re.MULTILINE)
_NLQ_QUERY = re.compile(r"^\d+\. \(qid (.+?)\) (.*)$", re.MULTILINE)


def parse_caption_lines(user_text: str) -> list[tuple[float, float, str]]:
    out = []
    for line in user_text.splitlines():
        match = _CAPTION_LINE.match(line)
        if match:
            out.append((float(match.group(1)), float(match.group(2)), match.group(3)))
    return out


class ScriptedQaBackend:
    """Picks the option whose text appears verbatim in the caption log."""

    def __init__(self, confidence: int = 3):
        self.confidence = confidence
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, system_text, user_text, sampling_seed=None, run_index=0):
        with self._lock:
            self.calls += 1
        qid = _QA_QID.search(user_text).group(1)
        log_text = user_text.split("Question (qid", 1)[0]
        letter = "A"
        confidence = 1
        for match in _OPTION.finditer(user_text):
            if match.group(2) and match.group(2) in log_text:
                letter = match.group(1)
                confidence = self.confidence
                break
        entry = {
            "qid": qid,
            "answer": letter,
            "explanation": "an option text appears in the log",
            "confidence": confidence,
        }
        return "```json\n" + json.dumps([entry]) + "\n```"


class ScriptedNlqBackend:
    """Returns the span of the caption line containing the query phrase.

    Queries are phrased "find: <phrase>"; a query whose phrase matches no
    caption line gets NA.
    """

    def __init__(self, confidence: int = 3):
        self.confidence = confidence
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, system_text, user_text, sampling_seed=None, run_index=0):
        with self._lock:
            self.calls += 1
        captions = parse_caption_lines(user_text)
        entries = []
        for match in _NLQ_QUERY.finditer(user_text):
            qid, text = match.group(1), match.group(2)
            phrase = text.split("find: ", 1)[-1]
            intervals = [[s, e] for s, e, t in captions if phrase in t]
            entries.append(
                {
                    "qid": qid,
                    "intervals": intervals if intervals else "NA",
                    "explanation": "span read off the log",
                    "confidence": self.confidence if intervals else 1,
                }
            )
        return "```json\n" + json.dumps(entries) + "\n```"


class RecordingBackend:
    """Delegates to another backend and records every exchange."""

    def __init__(self, inner):
        self.inner = inner
        self.transcripts: dict[str, dict[str, str]] = {}
        self._lock = threading.Lock()

    def complete(self, system_text, user_text, sampling_seed=None, run_index=0):
        text = self.inner.complete(
            system_text, user_text, sampling_seed=sampling_seed, run_index=run_index
        )
        key = prompt_sha256(system_text, user_text)
        with self._lock:
            self.transcripts.setdefault(key, {})[run_key(run_index)] = text
        return text


def synth_qa_benchmark(n_items=50, captions_per_video=12, seed=123):
    """Questions whose correct option is a literal caption text."""
    rng = random.Random(seed)
    tracks: dict[str, CaptionTrack] = {}
    queries: list[Query] = []
    for i in range(n_items):
        vid = f"v{i:03d}"
        texts = [
            f"C performs action {i}-{j} on the bench"
            for j in range(captions_per_video)
        ]
        tracks[vid] = make_track(vid, texts=texts)
        target = rng.randrange(captions_per_video)
        choices = [f"C performs action {i}-x{k} on the bench" for k in range(4)]
        answer_idx = rng.randrange(5)
        choices.insert(answer_idx, texts[target])
        queries.append(
            Query(
                qid=f"q{i:03d}",
                video_id=vid,
                kind=QueryKind.QA,
                text="Which action does C perform?",
                choices=tuple(choices),
                gt_answer_idx=answer_idx,
            )
        )
    return tracks, queries


def synth_nlq_benchmark(n_items=50, captions_per_video=12, seed=321):
    """Localization queries whose answer is a single caption's interval."""
    rng = random.Random(seed)
    tracks: dict[str, CaptionTrack] = {}
    queries: list[Query] = []
    for i in range(n_items):
        vid = f"w{i:03d}"
        texts = [
            f"C moves object {i}-{j} across the table"
            for j in range(captions_per_video)
        ]
        track = make_track(vid, texts=texts)
        tracks[vid] = track
        target = rng.randrange(captions_per_video)
        queries.append(
            Query(
                qid=f"n{i:03d}",
                video_id=vid,
                kind=QueryKind.NLQ,
                text=f"find: {texts[target]}",
                gt_window=track.captions[target].interval,
            )
        )
    return tracks, queries


def write_corpus(tmp_path, tracks, queries):
    """Write captions and queries files; returns their paths."""
    captions_path = tmp_path / "captions.jsonl"
    with open(captions_path, "w", encoding="utf-8") as handle:
        for vid in sorted(tracks):
            track = tracks[vid]
            handle.write(
                json.dumps(
                    {
                        "video_id": vid,
                        "clip_start_s": track.clip_start_s,
                        "clip_end_s": track.clip_end_s,
                    }
                )
                + "\n"
            )
            for cap in track.captions:
                handle.write(
                    json.dumps(
                        {
                            "video_id": vid,
                            "start_s": cap.start_s,
                            "end_s": cap.end_s,
                            "text": cap.text,
                        }
                    )
                    + "\n"
                )
    queries_path = tmp_path / "queries.jsonl"
    with open(queries_path, "w", encoding="utf-8") as handle:
        for q in queries:
            if q.kind is QueryKind.QA:
                record = {
                    "qid": q.qid,
                    "video_id": q.video_id,
                    "kind": "qa",
                    "question": q.text,
                    "choices": list(q.choices),
                }
                if q.gt_answer_idx is not None:
                    record["answer_idx"] = q.gt_answer_idx
            else:
                record = {
                    "qid": q.qid,
                    "video_id": q.video_id,
                    "kind": "nlq",
                    "query": q.text,
                }
                if q.gt_window is not None:
                    record["gt"] = list(q.gt_window)
            handle.write(json.dumps(record) + "\n")
    return captions_path, queries_path


def write_config(tmp_path, body: str):
    path = tmp_path / "config.ini"
    path.write_text(body, encoding="utf-8")
    return path


def oracle_iou(a: tuple[float, float], b: tuple[float, float]) -> Fraction:
    """Exact-rational IoU recount, independent of the library formula."""
    s1, e1 = Fraction(a[0]), Fraction(a[1])
    s2, e2 = Fraction(b[0]), Fraction(b[1])
    inter = min(e1, e2) - max(s1, s2)
    if inter <= 0:
        return Fraction(0)
    union = (e1 - s1) + (e2 - s2) - inter
    return inter / union


def _float_iou(a, b) -> float:
    s1, e1 = a
    s2, e2 = b
    lo, hi = max(s1, s2), min(e1, e2)
    if hi <= lo:
        return 0.0
    return (hi - lo) / ((e1 - s1) + (e2 - s2) - (hi - lo))


def oracle_nlq_report(preds, finals, gts, thresholds) -> dict:
    """Exhaustive per-query recount of every localization metric.

    Counts and denominators are re-derived from scratch and returned as
    exact Fractions keyed by metric name.
    """
    answered = [qid for qid in preds if not preds[qid].is_na]
    out = {}
    n_total, n_answered = len(preds), len(answered)
    n_overlap = sum(
        1
        for qid in answered
        if any(_float_iou(c.as_pair(), tuple(gts[qid])) > 0 for c in preds[qid].intervals)
    )
    out["na_ratio"] = (
        Fraction(n_total - n_answered, n_total) if n_total else Fraction(0)
    )
    out["overlap"] = Fraction(n_overlap, n_answered) if n_answered else Fraction(0)
    for t in thresholds:
        hits = sum(
            1
            for qid in answered
            if any(
                _float_iou(c.as_pair(), tuple(gts[qid])) > t
                for c in preds[qid].intervals
            )
        )
        out[("iou_star", t)] = Fraction(hits, n_answered) if n_answered else Fraction(0)
    r1s = []
    for t in thresholds:
        hits = sum(
            1 for qid in finals if _float_iou(tuple(finals[qid]), tuple(gts[qid])) > t
        )
        value = Fraction(hits, len(finals)) if finals else Fraction(0)
        out[("recall_at_1", t)] = value
        r1s.append(value)
    out["r1_mean"] = sum(r1s) / len(r1s) if r1s else Fraction(0)
    return out


def assert_report_matches_oracle(report, preds, finals, gts, thresholds, tol=1e-9):
    """Compare every field of an EvalReport against the recount oracle."""
    oracle = oracle_nlq_report(preds, finals, gts, thresholds)
    assert abs(report.na_ratio - oracle["na_ratio"]) <= tol
    assert abs(report.overlap - oracle["overlap"]) <= tol
    for t in thresholds:
        assert abs(report.iou_star[t] - oracle[("iou_star", t)]) <= tol
        assert abs(report.recall_at_1[t] - oracle[("recall_at_1", t)]) <= tol
    assert abs(report.r1_mean - oracle["r1_mean"]) <= tol
    assert report.n_queries == len(preds)
    assert report.n_answered == sum(1 for a in preds.values() if not a.is_na)


def random_nlq_fixture(rng, n_queries, na_rate=0.25):
    """Random predictions, final windows, and ground truths for recounts."""
    from egolog.corpus import QueryKind
    from egolog.reasoner import CandidateInterval, LlmAnswer

    preds, finals, gts = {}, {}, {}
    for i in range(n_queries):
        qid = f"q{i}"
        clip_end = rng.uniform(50.0, 500.0)
        gt_start = rng.uniform(0.0, clip_end - 1.0)
        gt_end = gt_start + rng.uniform(0.5, min(60.0, clip_end - gt_start))
        gts[qid] = (gt_start, gt_end)
        confidence = rng.randint(1, 3)
        if rng.random() < na_rate:
            answer = LlmAnswer(qid=qid, kind=QueryKind.NLQ, confidence=confidence)
            finals[qid] = (0.0, clip_end)
        else:
            candidates = []
            for _ in range(rng.randint(1, 3)):
                start = rng.uniform(0.0, clip_end - 0.5)
                end = start + rng.uniform(0.25, 80.0)
                candidates.append(CandidateInterval(start, end))
            answer = LlmAnswer(
                qid=qid,
                kind=QueryKind.NLQ,
                intervals=tuple(candidates),
                confidence=confidence,
            )
            finals[qid] = rng.choice(candidates).as_pair()
        preds[qid] = answer
    return preds, finals, gts


def random_qa_fixture(rng, n_queries):
    """Random QA predictions and keys for accuracy recounts."""
    from egolog.corpus import QueryKind
    from egolog.reasoner import LlmAnswer

    preds, gts = {}, {}
    for i in range(n_queries):
        qid = f"q{i}"
        gts[qid] = rng.randrange(5)
        preds[qid] = LlmAnswer(
            qid=qid,
            kind=QueryKind.QA,
            choice_idx=rng.randrange(5),
            confidence=rng.randint(1, 3),
        )
    return preds, gts
