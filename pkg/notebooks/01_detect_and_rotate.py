"""Detect pockets on a synthetic protein, then turn it a quarter and detect again.

Run with ``python3 notebooks/01_detect_and_rotate.py``.
"""

from geneopocket.geneo import TABLE1, predict
from geneopocket.grid import bounding_grid, cube_grid, inverse, octahedral_group, overlap_fraction, rotate_mask
from geneopocket.ingest import rotate_structure, synth_protein

protein, ligand = synth_protein(seed=0, n_atoms=100)
grid = cube_grid(bounding_grid(protein), 48)
pred = predict(protein, TABLE1, grid)

print(f"{protein.id}: {len(protein.atoms)} atoms on a {grid.shape} grid")
for rank, pocket in enumerate(pred.pockets[:3], 1):
    print(f"  pocket {rank}: {len(pocket.mask)} voxels, score {pocket.score:.4f}")

# Predictions on a turned copy, turned back, should land on the same voxels.
worst = 1.0
for word in octahedral_group():
    turned = predict(rotate_structure(protein, word, grid), TABLE1, grid).global_mask
    worst = min(worst, overlap_fraction(pred.global_mask, rotate_mask(turned, inverse(word))))
print(f"smallest overlap over the 24 cube rotations: {worst}")
