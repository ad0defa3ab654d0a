from .errors import *  # noqa: F403,F401
from .types import \
        Domain, \
        Grid, \
        GridField, \
        ShrinkSet  # noqa: F401
from .grid import \
        build_grid, \
        integrate, \
        gradient, \
        hessian, \
        norm, \
        distance_field, \
        level_measure, \
        shrink_set  # noqa: F401
from .coefficients import \
        parse_expression, \
        Region, \
        CoefficientField, \
        ProblemSpec, \
        psi_field, \
        identity_matrix  # noqa: F401
from .sectors import \
        SectorDecomposition, \
        sufficient_condition_check, \
        sector_decompose, \
        reduce_angles, \
        theta_field, \
        theta_clamped, \
        cutoff_tau  # noqa: F401
from .solver import \
        assemble, \
        solve_forward, \
        pde_residual  # noqa: F401
from .identity import \
        energy_density, \
        build_test_function, \
        potential_test_function, \
        sector_masks, \
        dominant_sector, \
        key_identity_check, \
        potential_identity_check, \
        fundamental_estimate_check, \
        fundamental_equality_terms, \
        potential_estimate_check  # noqa: F401
from .geometry import \
        nested_regions, \
        detect_critical_set, \
        detect_nodal_set, \
        extract_strata, \
        strata_distance, \
        build_slab_cover, \
        build_ball_cover, \
        fit_tube_constants, \
        fit_lojasiewicz, \
        level_measure_profile  # noqa: F401
from .stability import \
        split_value, \
        split_bound, \
        optimize_eta, \
        gn_exponents, \
        fit_gn_constant, \
        holder_certificate, \
        run_experiment, \
        run_family  # noqa: F401
from .reconstruct import \
        reconstruct_rho, \
        reconstruct_gamma_march  # noqa: F401
from .config import \
        load_config, \
        parse_config  # noqa: F401
from .report import \
        write_report, \
        append_summary  # noqa: F401
from .plot import \
        plot_convergence, \
        plot_tube_fit, \
        plot_lojasiewicz, \
        plot_stability_family  # noqa: F401
