# Library package for the Kolmogorov operator lab
#
# Import from individual modules:
#   from utils.evolution_solver import evolution_operator
#   from utils.estimate_verifier import verify_pointwise
#   from utils.inequality_lab import check_log_sobolev
#   etc.
#
# Scenario execution (klab.py run) lives in utils.scenario_runner.
