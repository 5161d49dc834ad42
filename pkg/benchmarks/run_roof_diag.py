import time

from micplan import bnb
from micplan.formulation import Formulation
from micplan.scenarios import load_scenario

scene, robot, task = load_scenario("roof", gait="free")
form = Formulation(scene, robot, task)
t0 = time.time()
stamp = lambda m: print(f"{time.time()-t0:7.1f}s {m}", flush=True)  # noqa: E731
sol = bnb.solve(form.problem,
                bnb.SolveOptions(gap_tol=1e-4, node_limit=150, log=stamp))
print("RESULT:", sol.status, sol.objective, "gap", sol.gap,
      "nodes", sol.nodes, flush=True)
