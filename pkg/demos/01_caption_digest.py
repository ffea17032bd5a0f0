"""
Compacting a caption track before it reaches the language model
===============================================================

A two-hour egocentric video turns into thousands of short captions, most
of them filler. This walks the three digest stages on a small track:
drop boilerplate, keep what is relevant to the queries, merge near-duplicate
neighbours into one line.
"""

from egolog.corpus import Caption, CaptionTrack, Query, QueryKind
from egolog.digest import DigestConfig, digest
from egolog.similarity import MockEmbedder

texts = [
    "C looks around the kitchen",
    "C washes the dishes in the sink",
    "C washes the dishes in the sink",
    "C rinses a plate under the tap",
    "C looks at the camera",
    "C cuts vegetables on the board",
    "C cuts vegetables on the board",
    "C opens the fridge door",
    "C stirs the pot on the stove",
    "C looks around the room",
]

captions = tuple(
    Caption(video_id="kitchen", start_s=4.0 * i, end_s=4.0 * (i + 1), text=t)
    for i, t in enumerate(texts)
)
track = CaptionTrack(
    video_id="kitchen", clip_start_s=0.0, clip_end_s=40.0, captions=captions
)

# the queries steer the relevance filter; anything far from both is dropped
queries = [
    Query(
        qid="q1",
        video_id="kitchen",
        kind=QueryKind.NLQ,
        text="find: C washes the dishes",
    ),
    Query(
        qid="q2",
        video_id="kitchen",
        kind=QueryKind.NLQ,
        text="find: C cuts vegetables",
    ),
]

embedder = MockEmbedder()
cfg = DigestConfig(relevance_threshold=0.25, adjacency_threshold=0.95)

# llm=None keeps the concat merge strategy; pass a backend to merge with it
digested, stats = digest(track, queries, embedder, None, cfg)

print(f"input captions:        {stats.input_captions}")
print(f"dropped as boilerplate: {stats.dropped_uninformative}")
print(f"dropped as irrelevant:  {stats.dropped_irrelevant}")
print(f"merged away:            {stats.captions_merged_away}")
print(f"output captions:        {stats.output_captions}")
print()
for cap in digested.captions:
    print(f"  [{cap.start_s:5.1f}s - {cap.end_s:5.1f}s] {cap.text}")
