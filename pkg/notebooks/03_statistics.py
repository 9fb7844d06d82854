"""The three statistical harnesses on synthetic data, at sizes that run in about a minute."""

from geneopocket.geneo import TABLE1, GeneoDetector
from geneopocket.grid import QuarterTurn
from geneopocket.ingest import PocketSpec, synth_protein, synth_trajectory
from geneopocket.stats import (
    equivariance_proportions,
    format_equivariance_table,
    format_robustness_table,
    format_summary,
    frame_overlap_series,
    mean_overlap_test,
    sensitivity,
)
from geneopocket.train import TrainConfig

detector = GeneoDetector(TABLE1)

# Rotation agreement as a proportion with a 99% Wald interval.
proteins = [synth_protein(seed, 80)[0] for seed in range(6)]
table = equivariance_proportions(detector, proteins, 0.95, QuarterTurn("x", 1))
print(format_equivariance_table(table))

# Frame-to-frame stability under small versus large motion.
rows = []
for seed in range(2):
    base, _ = synth_protein(seed, 80)
    large = frame_overlap_series(detector, synth_trajectory(base, seed, frames=12, step_scale=0.5))
    small = frame_overlap_series(detector, synth_trajectory(base, seed, frames=12, step_scale=0.05))
    rows.append((base.id, mean_overlap_test(large.nonmissing(), small.nonmissing())))
print(format_robustness_table(rows))

# Parameter spread over random training subsets.
pool = [synth_protein(seed, 80, PocketSpec(chemistry="single")) for seed in range(10)]
report = sensitivity(TrainConfig(pool[:1], max_iters=40), repetitions=4, pool=pool, subset_size=5, seed=1)
print(format_summary(report))
