from hisgrad.coopgame import (CharacteristicGame, hybrid_allocation,
                              is_convex, is_in_core, shapley_values)

# Agent 0 is strong on its own, agents 1 and 2 only create value together.
game = CharacteristicGame(3, [0, 1, 0, 2, 0, 2, 1, 4])

print("Convex:", is_convex(game))

phi = shapley_values(game)
print("Shapley values:", phi.payoffs, "in Core:", is_in_core(game, phi))

x = hybrid_allocation(game)
print("Hybrid allocation:", x.payoffs, "in Core:", is_in_core(game, x))
