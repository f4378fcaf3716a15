"""Single tuning point for numerical tolerances."""

STRUCTURAL = 1e-10   # unitarity, symplectic conditions, rank cuts
ROUNDTRIP = 1e-8     # Bloch-Messiah compose/decompose
ORACLE = 1e-9        # fast path vs brute force
SQUEEZE_FLUSH = 1e-12
RANK_CUT = 1e-10     # relative to the largest singular value
LEAKAGE = 1e-12
NORMALIZATION = 1e-6
