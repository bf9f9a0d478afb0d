import blockpd as bp

net, p = bp.generate_benchmark(seed=0)
p = net.to_problem("grouped")
geom = bp.DualGeometry.from_problem(p, delta=0.1)
consts = bp.compute_constants(p, geom)
cfg = bp.SimulationConfig(seed=0, steps=2000, stop_tol=0.0)

bp.run(p, geom, consts, cfg)
