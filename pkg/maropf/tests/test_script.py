"""
Test script to be executed before pushing or submitting a PR to master
repository.
"""

import unittest

from .acceptance_test import (
    test_feeder_design_is_secure,
    test_large_feeder_optimize_then_simulate,
    test_refinement_on_feeder,
    test_relaxed_design_overvoltages,
    test_restricted_flow_bounds_hold,
)
from .case_loader_test import test_bundled_cases, test_case_errors, test_profile_errors, test_profile_windows
from .cli_test import (
    test_check_exit_codes,
    test_flags_override_config_file,
    test_optimize_exit_code_matches_report,
    test_simulate_flags_overvoltage,
)
from .conditions_test import (
    test_condition_break_under_growing_injection,
    test_conditions_hold_without_droop,
    test_inverse_and_signs,
    test_lossless_identity_at_power_flow,
    test_matrix_cache,
    test_neumann_series,
    test_slope_tuning_and_sweep,
)
from .designer_test import (
    test_check_writes_report,
    test_compare_modes,
    test_debug_writes_nothing,
    test_optimize_then_simulate,
    test_resolve_config,
)
from .droop_test import (
    test_activation_consistency,
    test_approximation_error_signs,
    test_capability_clipping,
    test_impedance_split,
    test_linear_model_gap_is_quadratic,
    test_mapping_round_trip,
)
from .grid_test import (
    test_path_matrices,
    test_per_unit_round_trip,
    test_radial_diagnostics,
    test_scaled_and_downstream_load,
)
from .powerflow_test import (
    test_droop_flow_matches_closed_form,
    test_droop_flow_matches_newton,
    test_horizon_and_residuals,
    test_relaxation_waits_for_pass_count,
    test_security_verdict,
    test_sweep_matches_closed_form,
)
from .program_test import (
    test_droop_design_validation,
    test_power_flow_point_is_feasible,
    test_program_checks_and_dump,
    test_program_sizes,
    test_refinement_substitution,
)
from .refine_test import test_activation_sets, test_iteration_cap_keeps_incumbent, test_refinement_never_worsens
from .report_test import test_droop_file_and_series, test_report_round_trip
from .solver_test import (
    test_binary_presolve,
    test_branch_and_bound_matches_enumeration,
    test_dependent_rows_are_remembered,
    test_relaxation_never_exceeds_availability,
    test_ropf_matches_power_flow,
    test_small_conic_programs,
    test_solver_log,
)
from .studies_test import test_comparison_rows, test_current_bound_gap_is_small


class TestMethods(unittest.TestCase):
    def test_grid(self):
        test_path_matrices()
        test_radial_diagnostics()
        test_per_unit_round_trip()
        test_scaled_and_downstream_load()

    def test_case_io(self):
        test_bundled_cases()
        test_case_errors()
        test_profile_windows()
        test_profile_errors()

    def test_conditions(self):
        test_inverse_and_signs()
        test_conditions_hold_without_droop()
        test_lossless_identity_at_power_flow()
        test_slope_tuning_and_sweep()
        test_neumann_series()
        test_matrix_cache()
        test_condition_break_under_growing_injection()

    def test_droop(self):
        test_mapping_round_trip()
        test_linear_model_gap_is_quadratic()
        test_approximation_error_signs()
        test_activation_consistency()
        test_impedance_split()
        test_capability_clipping()

    def test_powerflow(self):
        test_sweep_matches_closed_form()
        test_droop_flow_matches_newton()
        test_droop_flow_matches_closed_form()
        test_relaxation_waits_for_pass_count()
        test_horizon_and_residuals()
        test_security_verdict()

    def test_program(self):
        test_program_sizes()
        test_power_flow_point_is_feasible()
        test_program_checks_and_dump()
        test_refinement_substitution()
        test_droop_design_validation()

    def test_solver(self):
        test_small_conic_programs()
        test_binary_presolve()
        test_ropf_matches_power_flow()
        test_branch_and_bound_matches_enumeration()
        test_solver_log()
        test_dependent_rows_are_remembered()
        test_relaxation_never_exceeds_availability()

    def test_refinement(self):
        test_activation_sets()
        test_refinement_never_worsens()
        test_iteration_cap_keeps_incumbent()

    def test_reports(self):
        test_report_round_trip()
        test_droop_file_and_series()
        test_comparison_rows()
        test_current_bound_gap_is_small()

    def test_design_runs(self):
        test_resolve_config()
        test_check_writes_report()
        test_debug_writes_nothing()
        test_optimize_then_simulate()
        test_compare_modes()
        test_flags_override_config_file()
        test_check_exit_codes()
        test_simulate_flags_overvoltage()
        test_optimize_exit_code_matches_report()

    def test_feeders(self):
        test_restricted_flow_bounds_hold()
        test_feeder_design_is_secure()
        test_relaxed_design_overvoltages()
        test_refinement_on_feeder()
        test_large_feeder_optimize_then_simulate()


if __name__ == "__main__":
    unittest.main(warnings="ignore")
