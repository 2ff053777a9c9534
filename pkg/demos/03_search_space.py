"""Count the space, draw a random architecture and mutate it."""
from mpnnas.space import DEFAULT_TABLE, cardinality, decode, mutate, sample_uniform

print(f"architectures: {cardinality(DEFAULT_TABLE):,}")
p = sample_uniform(seed=3)
print("vector", p)
arch = decode(p)
for i, c in enumerate(arch.cells, 1):
    print(f"cell{i}", vars(c))
print("gather", arch.gather)

child = mutate(p, seed=4)
diff = [i for i, (a, b) in enumerate(zip(p, child)) if a != b]
print("child", child, "differs at position", diff)
