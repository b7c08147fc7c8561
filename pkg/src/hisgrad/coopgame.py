"""
Exact cooperative game theory over the grand coalition: characteristic games,
convexity, Shapley values, the hybrid allocation and Core membership.

Coalitions are bitsets over agent indices ``0..n-1``; a game stores its
characteristic function as an array of length ``2**n`` indexed by those
bitsets. All routines are pure functions of their inputs.
"""
import itertools
import json
from dataclasses import dataclass
from typing import *

import numpy as np  # type: ignore
from sklearn.utils import check_random_state  # type: ignore

from .utils import log_factorial, popcount

# Absolute tolerance for all game inequalities.
EPS = 1e-9
# Largest n for which we enumerate all 2**n coalitions.
MAX_EXACT = 20
# Largest n for which we enumerate all 4**n coalition pairs.
MAX_EXHAUSTIVE = 10
# Up to this n, factorials are exact in float64.
MAX_EXACT_FACTORIAL = 12


@dataclass(frozen=True)
class Coalition:
    """
    A coalition of agents of an ``n``-agent game, stored as a bitset.

    Parameters
    ----------
    mask : int
        Bit ``i`` is set iff agent ``i`` is a member.
    n : int
        Number of agents of the owning game.
    """
    mask: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive but is {self.n}")
        if not 0 <= self.mask < 2**self.n:
            raise ValueError(
                f"Coalition mask {self.mask} refers to agents beyond n = "
                f"{self.n}")

    @classmethod
    def from_members(cls, members: Iterable[int], n: int):
        mask = 0
        for i in members:
            if not 0 <= i < n:
                raise ValueError(f"Agent index {i} not in 0..{n - 1}")
            mask |= 1 << i
        return cls(mask, n)

    @classmethod
    def empty(cls, n: int):
        return cls(0, n)

    @classmethod
    def grand(cls, n: int):
        return cls(2**n - 1, n)

    def members(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    def __contains__(self, i):
        return 0 <= i < self.n and bool(self.mask >> i & 1)

    def __len__(self):
        return bin(self.mask).count("1")

    def __iter__(self):
        return iter(self.members())

    def add(self, i: int):
        return Coalition.from_members(self.members() + (i, ), self.n)

    def union(self, other: "Coalition"):
        self._check_compatible(other)
        return Coalition(self.mask | other.mask, self.n)

    def intersection(self, other: "Coalition"):
        self._check_compatible(other)
        return Coalition(self.mask & other.mask, self.n)

    def key(self) -> str:
        """
        The key of this coalition in the JSON game format (comma-separated
        sorted member list, ``""`` for the empty coalition).
        """
        return ",".join(str(i) for i in self.members())

    @classmethod
    def from_key(cls, key: str, n: int):
        key = key.strip()
        if key == "":
            return cls.empty(n)
        members = [int(k) for k in key.split(",")]
        if members != sorted(set(members)):
            raise ValueError(f"Coalition key {key!r} is not a sorted member "
                             "list without duplicates")
        return cls.from_members(members, n)

    def _check_compatible(self, other):
        if self.n != other.n:
            raise ValueError("Coalitions belong to games of different size")

    def __repr__(self):
        return f"Coalition({set(self.members()) or '{}'}, n={self.n})"


class CharacteristicGame:
    """
    A transferable-utility game ``(N, v)`` with ``v(∅) = 0``.

    Immutable after construction.
    """
    def __init__(self, n: int, values):
        """
        Parameters
        ----------
        n : int
            Number of agents (``1 <= n <= 20``).
        values : array of shape (2**n,)
            ``values[mask]`` is the value of the coalition with bitset
            ``mask``.
        """
        if not 1 <= n <= MAX_EXACT:
            raise ValueError(f"n must lie in 1..{MAX_EXACT} but is {n}")
        values = np.array(values, dtype=float)
        if values.shape != (2**n, ):
            raise ValueError(f"Expected {2**n} coalition values but got "
                             f"array of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Coalition values must be finite")
        if values[0] != 0:
            raise ValueError(f"v(∅) must be 0 but is {values[0]}")
        values.setflags(write=False)
        self.n = n
        self.values = values

    @classmethod
    def from_function(cls, n: int, f: Callable[[Coalition], float]):
        """
        Tabulate ``f`` on all ``2**n`` coalitions.
        """
        return cls(n, [f(Coalition(mask, n)) for mask in range(2**n)])

    def v(self, coalition: Union[Coalition, int]) -> float:
        mask = coalition.mask if isinstance(coalition, Coalition) else coalition
        return float(self.values[mask])

    __call__ = v

    @property
    def grand_value(self) -> float:
        return float(self.values[-1])

    def scaled(self, c: float):
        """
        The game ``(N, c·v)``.
        """
        return CharacteristicGame(self.n, c * self.values)

    def masks(self) -> np.ndarray:
        return np.arange(2**self.n, dtype=np.int64)

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "values": {
                Coalition(mask, self.n).key(): float(self.values[mask])
                for mask in range(2**self.n)
            }
        }

    @classmethod
    def from_dict(cls, d: Dict):
        """
        Parse the JSON game format, rejecting missing or superfluous
        coalitions as well as ``v(∅) != 0``.
        """
        try:
            n = int(d["n"])
            entries = d["values"]
        except (KeyError, TypeError) as e:
            raise ValueError(f"Malformed game description: {e}")
        if not 1 <= n <= MAX_EXACT:
            raise ValueError(f"n must lie in 1..{MAX_EXACT} but is {n}")
        values = np.full(2**n, np.nan)
        for key, value in entries.items():
            mask = Coalition.from_key(key, n).mask
            if not np.isnan(values[mask]):
                raise ValueError(f"Coalition {key!r} given twice")
            values[mask] = float(value)
        missing = np.flatnonzero(np.isnan(values))
        if len(missing) > 0:
            raise ValueError(
                f"Missing values for {len(missing)} coalitions, e.g. "
                f"{Coalition(int(missing[0]), n).key()!r}")
        return cls(n, values)

    def __repr__(self):
        return f"CharacteristicGame(n={self.n}, v(N)={self.grand_value})"


@dataclass
class Allocation:
    """
    A payoff vector ``x = (x^1, …, x^n)``.
    """
    payoffs: np.ndarray

    def __post_init__(self):
        self.payoffs = np.asarray(self.payoffs, dtype=float)

    def __len__(self):
        return len(self.payoffs)

    def __getitem__(self, i):
        return self.payoffs[i]

    def total(self) -> float:
        return float(np.sum(self.payoffs))

    def coalition_sums(self) -> np.ndarray:
        """
        ``x(C)`` for all ``2**n`` coalitions (indexed by bitset).
        """
        n = len(self)
        masks = np.arange(2**n, dtype=np.int64)
        sums = np.zeros(2**n)
        for i in range(n):
            sums += self.payoffs[i] * ((masks >> i) & 1)
        return sums


def load_game(path) -> CharacteristicGame:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not valid JSON ({e})")
    return CharacteristicGame.from_dict(d)


def dump_game(game: CharacteristicGame, path):
    with open(path, "w") as f:
        json.dump(game.to_dict(), f, indent=2)
        f.write("\n")


def coalition_weight(c_size, n: int):
    """
    Probability ``|C|! (n - |C| - 1)! / n!`` of an agent joining a coalition
    of size ``|C|`` when agents arrive in a uniformly random order.

    Parameters
    ----------
    c_size : int or array of int
        Coalition size(s) in ``0..n-1``.
    n : int
        Number of agents.

    Returns
    -------
    float or array of float
    """
    if n < 1:
        raise ValueError(f"n must be positive but is {n}")
    c_size = np.asarray(c_size)
    if np.any(c_size < 0) or np.any(c_size >= n):
        raise ValueError(
            f"Coalition size must lie in 0..{n - 1} (got {c_size})")
    if n <= MAX_EXACT_FACTORIAL:
        fact = np.array([float(np.prod(np.arange(1, k + 1)))
                         for k in range(n + 1)])
        w = fact[c_size] * fact[n - c_size - 1] / fact[n]
    else:
        w = np.exp(
            log_factorial(c_size) + log_factorial(n - c_size - 1)
            - log_factorial(n))
    return float(w) if w.ndim == 0 else w


def shapley_exact(game: CharacteristicGame, i: int) -> float:
    """
    Shapley value of agent ``i`` by enumerating all ``2**(n-1)`` coalitions
    not containing ``i``.
    """
    n = game.n
    if not 0 <= i < n:
        raise ValueError(f"Agent index {i} not in 0..{n - 1}")
    masks = game.masks()
    masks = masks[((masks >> i) & 1) == 0]
    weights = coalition_weight(popcount(masks), n)
    v = game.values
    return float(np.sum(weights * (v[masks | (1 << i)] - v[masks])))


def shapley_values(game: CharacteristicGame) -> Allocation:
    return Allocation([shapley_exact(game, i) for i in range(game.n)])


def shapley_permutation(game: CharacteristicGame) -> Allocation:
    """
    Shapley values as the average marginal contribution over all ``n!`` agent
    orderings. Only meant as an oracle for small games (``n <= 8``).
    """
    n = game.n
    if n > 8:
        raise ValueError("Permutation enumeration infeasible for n > 8")
    v = game.values
    phi = np.zeros(n)
    count = 0
    for order in itertools.permutations(range(n)):
        mask = 0
        for i in order:
            phi[i] += v[mask | (1 << i)] - v[mask]
            mask |= 1 << i
        count += 1
    return Allocation(phi / count)


def hybrid_allocation(game: CharacteristicGame) -> Allocation:
    """
    Equal split of one half of ``v(N)`` plus the Shapley value of the half
    game ``(N, v/2)``.
    """
    base = game.grand_value / (2 * game.n)
    return Allocation(base + shapley_values(game.scaled(0.5)).payoffs)


def is_efficient(game: CharacteristicGame, x: Allocation) -> bool:
    _check_allocation(game, x)
    return abs(x.total() - game.grand_value) <= EPS


def find_core_violation(game: CharacteristicGame,
                        x: Allocation) -> Optional[Coalition]:
    """
    The first coalition ``C`` (in bitset order) with ``x(C) < v(C)``, or
    ``None`` if there is none.
    """
    _check_allocation(game, x)
    blocking = np.flatnonzero(x.coalition_sums() < game.values - EPS)
    if len(blocking) == 0:
        return None
    return Coalition(int(blocking[0]), game.n)


def is_in_core(game: CharacteristicGame, x: Allocation) -> bool:
    return find_core_violation(game, x) is None


def find_convexity_violation(
        game: CharacteristicGame) -> Optional[Tuple[Coalition, Coalition]]:
    """
    The first pair ``(C, D)`` with ``v(C ∪ D) + v(C ∩ D) < v(C) + v(D)``, or
    ``None`` if the game is convex.
    """
    _check_exhaustive(game)
    v = game.values
    masks = game.masks()
    for c in masks:
        slack = v[c | masks] + v[c & masks] - v[c] - v[masks]
        bad = np.flatnonzero(slack < -EPS)
        if len(bad) > 0:
            return Coalition(int(c), game.n), Coalition(int(bad[0]), game.n)
    return None


def is_convex(game: CharacteristicGame) -> bool:
    return find_convexity_violation(game) is None


def is_superadditive(game: CharacteristicGame) -> bool:
    _check_exhaustive(game)
    v = game.values
    masks = game.masks()
    for c in masks:
        d = masks[(masks & c) == 0]
        if np.any(v[c | d] < v[c] + v[d] - EPS):
            return False
    return True


def generate_convex_game(random_state, n: int) -> CharacteristicGame:
    """
    A random convex game ``v(C) = g(|C|) + Σ_{i ∈ C} w_i`` where ``g(k) = a
    k^p`` (``a > 0``, ``p > 1``) is strictly convex and increasing with ``g(0)
    = 0`` and ``w_i >= 0``. Cardinality-convex functions are supermodular and
    adding an additive game keeps them so.

    Parameters
    ----------
    random_state : int, NumPy (legacy) ``RandomState`` object
    n : int
        Number of agents (``2 <= n <= 8``).
    """
    if not 2 <= n <= 8:
        raise ValueError(f"n must lie in 2..8 but is {n}")
    random_state = check_random_state(random_state)
    a = random_state.uniform(0.5, 2.0)
    p = random_state.uniform(1.5, 3.0)
    w = random_state.uniform(0.0, 1.0, size=n)
    masks = np.arange(2**n, dtype=np.int64)
    sizes = popcount(masks)
    additive = np.zeros(2**n)
    for i in range(n):
        additive += w[i] * ((masks >> i) & 1)
    return CharacteristicGame(n, a * sizes.astype(float)**p + additive)


def random_game(random_state, n: int, low=-1.0, high=2.0):
    """
    A game with i.i.d. uniform coalition values (and ``v(∅) = 0``); in general
    neither convex nor superadditive.
    """
    random_state = check_random_state(random_state)
    values = random_state.uniform(low, high, size=2**n)
    values[0] = 0
    return CharacteristicGame(n, values)


def _check_exhaustive(game):
    if game.n > MAX_EXHAUSTIVE:
        raise ValueError(
            f"exhaustive check infeasible for n = {game.n} > {MAX_EXHAUSTIVE}")


def _check_allocation(game, x):
    if len(x) != game.n:
        raise ValueError(f"Allocation has {len(x)} entries but game has "
                         f"{game.n} agents")
