from sklearn.base import BaseEstimator  # type: ignore
from sklearn.utils.validation import check_is_fitted  # type: ignore

from .config import RunConfig
from .trainer import Trainer


class HIS(BaseEstimator):
    """
    Multi-agent soft actor-critic with historical-likelihood Shapley credit
    assignment.

    Follows the [scikit-learn estimator
    pattern](https://scikit-learn.org/stable/developers/develop.html#estimators)
    as far as that makes sense for reinforcement learning: ``fit`` interacts
    with the environment instead of consuming a data set and ``predict``
    maps per-agent observations to deterministic actions.
    """
    def __init__(self, config: RunConfig = None, env=None, out_dir=None):
        """
        Parameters
        ----------
        config : RunConfig or None
            Hyperparameters; ``RunConfig()`` (i.e. the defaults) if ``None``.
        env : hisgrad.envs.Env or None
            Environment to train on; if ``None``, the one named by
            ``config.env`` is built.
        out_dir : path or None
            Where to write metrics, checkpoints and the run summary (nothing
            is written if ``None``).
        """
        self.config = config
        self.env = env
        self.out_dir = out_dir

    def fit(self, X=None, y=None):
        """
        Train all agents.

        Parameters
        ----------
        X, y : ignored
            Present for API consistency.

        Returns
        -------
        self : object
            Fitted estimator.
        """
        config = RunConfig() if self.config is None else self.config
        self.trainer_ = Trainer(config, env=self.env,
                                out_dir=self.out_dir).fit()
        self.metrics_ = self.trainer_.metrics
        return self

    def predict(self, obs):
        """
        Deterministic joint action.

        Parameters
        ----------
        obs : array of shape (n, obs_dim)
            One observation per agent.

        Returns
        -------
        array of shape (n, D)
            ``tanh(μ^i(o^i))`` for every agent ``i``.
        """
        check_is_fitted(self)
        return self.trainer_.predict(obs)
