import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from cpcm_errors import DegenerateInputError, PreconditionError
from data_utils import as_vector, derive_seed, empirical_pit, require_finite
from discovery.reports import DirectionVerdict, DiscoveryReport, Verdict
from discovery.score_config import ScoreConfig
from distributions.expfam import Family, get_family
from estimators.smooth_mle import fit_conditional, pit_residuals
from independence.hoeffding import hoeffding_d_test
from independence.hsic import hsic_test
from independence.results import TestResult

HOEFFDING_MIN_N = 1001
MIN_BIVARIATE_N = 50


def dependence_test(u, v, config: ScoreConfig, seed: int) -> TestResult:
    """Hoeffding's D above 1000 observations, HSIC otherwise"""
    if len(u) >= HOEFFDING_MIN_N:
        return hoeffding_d_test(u, v, n_perm=config.n_perm, seed=seed)
    return hsic_test(u, v, n_perm=config.n_perm, seed=seed, max_bandwidth_points=config.max_bandwidth_points)


def evaluate_direction(cause: np.ndarray, effect: np.ndarray, family: Family, names: Tuple[str, str],
                       p_dependence: float, config: ScoreConfig, seed: int) -> DirectionVerdict:
    """Fit effect | cause, then test the PIT residuals against the cause"""
    cause_name, effect_name = names
    inside = family.support.contains(effect)
    if not np.all(inside):
        logging.info(f"{cause_name}->{effect_name}: {int((~inside).sum())} values of {effect_name} lie outside "
                     f"the {family.id} support {family.support.label}; direction not plausible")
        return DirectionVerdict(cause_name, effect_name, p_dependence, 0.0, False, reason='support_mismatch')

    model, diagnostics = fit_conditional(family, cause, effect, **config.fit_options())
    residuals = pit_residuals(model, cause, effect)
    try:
        test = dependence_test(empirical_pit(cause), residuals, config, seed)
    except DegenerateInputError as e:
        logging.warning(f"{cause_name}->{effect_name}: residual test impossible ({e})")
        return DirectionVerdict(cause_name, effect_name, p_dependence, 0.0, False, model=model,
                                diagnostics=diagnostics, reason='degenerate_residuals')
    plausible = test.p_value >= config.alpha
    logging.info(f"{cause_name}->{effect_name} ({family.id}): residual p={test.p_value:.4f}, "
                 f"plausible={plausible}, converged={diagnostics.converged}")
    return DirectionVerdict(cause_name, effect_name, p_dependence, test.p_value, plausible,
                            model=model, diagnostics=diagnostics, residual_test=test)


def _scored_choice(forward: DirectionVerdict, backward: DirectionVerdict) -> Optional[str]:
    """Larger residual p-value wins; equal p-values go to the smaller statistic"""
    candidates = [d for d in (forward, backward) if d.residual_test is not None]
    if not candidates:
        return None
    best = min(candidates, key=lambda d: (-d.p_residual, d.residual_test.statistic))
    return best.label


def bivariate_discover(x1, x2, f1, f2=None, config: Optional[ScoreConfig] = None,
                       names: Sequence[str] = ('x1', 'x2')) -> DiscoveryReport:
    """Plausibility of x1->x2 and x2->x1 under CPCM(f1, f2)

    x2 | x1 is modelled with f2 and x1 | x2 with f1; a single family is used
    for both when f2 is omitted.
    """
    config = config or ScoreConfig()
    f1 = get_family(f1)
    f2 = get_family(f2) if f2 is not None else f1
    x1 = as_vector(x1, 'x1')
    x2 = as_vector(x2, 'x2')
    if x1.size != x2.size:
        raise PreconditionError(f"x1 and x2 must have equal length, got {x1.size} and {x2.size}")
    if x1.size < MIN_BIVARIATE_N:
        raise PreconditionError(f"bivariate discovery needs n >= {MIN_BIVARIATE_N}, got {x1.size}")
    require_finite(x1, 'x1')
    require_finite(x2, 'x2')
    name1, name2 = names
    families = {name1: f1.id, name2: f2.id}

    dep = dependence_test(x1, x2, config, derive_seed(config.seed, 'dependence'))
    logging.info(f"Marginal dependence {name1} vs {name2}: {dep.method.value} p={dep.p_value:.4f}")
    if dep.p_value >= config.alpha:
        return DiscoveryReport(Verdict.EMPTY, config.alpha, families, dependence_test=dep, config=config.to_dict())

    residual_seed = derive_seed(config.seed, 'residual')
    forward = evaluate_direction(x1, x2, f2, (name1, name2), dep.p_value, config, residual_seed)
    backward = evaluate_direction(x2, x1, f1, (name2, name1), dep.p_value, config, residual_seed)

    if forward.plausible and not backward.plausible:
        verdict = Verdict.FORWARD
    elif backward.plausible and not forward.plausible:
        verdict = Verdict.BACKWARD
    elif forward.plausible:
        verdict = Verdict.BOTH_PLAUSIBLE
    else:
        verdict = Verdict.NONE_PLAUSIBLE

    choice = None
    if verdict in (Verdict.BOTH_PLAUSIBLE, Verdict.NONE_PLAUSIBLE) and config.fallback:
        choice = _scored_choice(forward, backward)
    logging.info(f"Verdict {verdict.value}" + (f", scored choice {choice}" if choice else ''))
    return DiscoveryReport(verdict, config.alpha, families, directions=[forward, backward],
                           dependence_test=dep, scored_choice=choice, config=config.to_dict())
