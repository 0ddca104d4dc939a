# Band partitioning, the frontier schedule, and bitwise agreement across
# thread counts.

import time

from tpilu import gen_stencil_27pt, parallel_factor, partition_bands

part = partition_bands(10, 3, 2)
print("10 rows, nominal 3 per band:", [list(part.rows_of_band(b)) for b in range(part.nbands)])
print("owners:", [part.worker_of_band(b) for b in range(part.nbands)])

A = gen_stencil_27pt(20)
print("\nstencil 20^3, n =", A.n, "nnz =", A.nnz)

ref = parallel_factor(A, 2, workers=1, band_size=A.n)
for w, bs in [(1, 100), (2, 100), (4, 250), (8, 37)]:
    t0 = time.perf_counter()
    fr = parallel_factor(A, 2, workers=w, band_size=bs)
    dt = time.perf_counter() - t0
    same = fr.filled == ref.filled and fr.fpa == ref.fpa
    print(f"w={w} band_size={bs:>3} bands={fr.partition.nbands:>3} {dt:.2f}s bit-identical={same}")

# the frontier only ever moves forward, one band at a time
log = fr.logs["numeric"]
print("\nfrontier (first steps):", log.frontier_history[:8], "...", log.frontier_history[-1])
print("tasks executed:", log.tasks, "for", fr.partition.nbands, "bands")
