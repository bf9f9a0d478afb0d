import blockpd as bp

_, p = bp.generate_benchmark(seed=0)
geom = bp.DualGeometry.from_problem(p, delta=0.1)
consts = bp.compute_constants(p, geom)
cfg = bp.SimulationConfig(seed=0, steps=2000, p_update=0.5, delay=0.2, stop_tol=0.0)

bp.run(p, geom, consts, cfg, track_distances=False)
