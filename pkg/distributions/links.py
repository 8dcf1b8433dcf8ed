from enum import Enum

import numpy as np
from scipy.special import expit, logit


class Link(str, Enum):
    """Link between a distribution parameter and its linear predictor"""

    IDENTITY = 'identity'
    LOG = 'log'
    LOGIT = 'logit'

    def to_eta(self, theta):
        """Parameter scale -> linear-predictor scale"""
        theta = np.asarray(theta, dtype=float)
        if self is Link.LOG:
            return np.log(theta)
        if self is Link.LOGIT:
            return logit(theta)
        return theta

    def to_theta(self, eta):
        """Linear-predictor scale -> parameter scale"""
        eta = np.asarray(eta, dtype=float)
        if self is Link.LOG:
            # keeps exp finite; parameters this extreme are rejected downstream anyway
            return np.exp(np.clip(eta, -700.0, 700.0))
        if self is Link.LOGIT:
            return expit(eta)
        return eta

    def dtheta_deta(self, theta):
        """First derivative of the inverse link, written in terms of theta"""
        theta = np.asarray(theta, dtype=float)
        if self is Link.LOG:
            return theta
        if self is Link.LOGIT:
            return theta * (1.0 - theta)
        return np.ones_like(theta)

    def d2theta_deta2(self, theta):
        """Second derivative of the inverse link, written in terms of theta"""
        theta = np.asarray(theta, dtype=float)
        if self is Link.LOG:
            return theta
        if self is Link.LOGIT:
            return theta * (1.0 - theta) * (1.0 - 2.0 * theta)
        return np.zeros_like(theta)
