from neumann_lowrank import Discretization, GeometrySpec, WorkerPool, iterate, partitioned_setup
