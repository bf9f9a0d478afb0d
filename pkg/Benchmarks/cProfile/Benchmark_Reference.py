import blockpd as bp

_, p = bp.generate_benchmark(seed=0)
geom = bp.DualGeometry.from_problem(p, delta=0.1)
consts = bp.compute_constants(p, geom)

bp.uzawa_solve(p, geom)
bp.penalty_solve(p, geom)
bp.unregularized_solve(p)
bp.corollary_parameters(p, geom, consts, 0.1, 0.1, delta_max=None)
