"""P1 finite elements on polar triangulations: assembly, DtN maps and interior problems."""

from .assemble import AssembledSystem, assemble, boundary_mass
from .interior import FredholmReport, condense, fredholm_diagnose, solve_compatible, solve_constant_trace
from .mesh import Mesh, generate_disk_mesh
from .solve import BoundaryDtN, DirichletProblem, FieldSolution, dtn_matrix, flux_integral, solve_dirichlet
