# %% [markdown]
# # The policy and value networks
#
# The first layer scales each tier with one weight shared by all stacks. Then
# come layers whose weights are local to one stack, and finally dense layers.
# Everything is plain numpy in float64.

# %%
import numpy as np

from dlts.cpmp import generate_instance
from dlts.encoding import encode_bay, masked_policy
from dlts.nn import AdamState, backward_and_step, build_network, loss_and_grad

net = build_network(4, 5, "policy", swl=2, nswl=3, scale=12.0, seed=0)
for layer in net.layers:
    print(layer.kind, {k: v.shape for k, v in layer.params.items()})
print("parameters:", net.n_params())

# %% [markdown]
# Outputs cover every ordered pair of stacks. Masking removes illegal moves.

# %%
bay = generate_instance(4, 5, "G1", 12, seed=3).bay
out = net.forward(encode_bay(bay, net.scale))
print("sum of outputs:", out.sum())
for move, p in masked_policy(out, bay)[:3]:
    print(move, round(p, 3))

# %% [markdown]
# Central differences agree with backpropagation.

# %%
rng = np.random.default_rng(0)
X = rng.random((8, 20))
Y = np.eye(12)[rng.integers(12, size=8)]
_, grad = loss_and_grad(net, X, Y)
net.backward(grad)
W = net.layers[0].params["W"]
h, i = 1e-5, 2
W[i] += h
up = loss_and_grad(net, X, Y)[0]
W[i] -= 2 * h
down = loss_and_grad(net, X, Y)[0]
W[i] += h
print("analytic %.8f numeric %.8f" % (net.layers[0].grads["W"][i], (up - down) / (2 * h)))

# %% [markdown]
# A few hundred Adam steps fit a tiny batch.

# %%
adam = AdamState(lr=1e-2)
losses = [backward_and_step(net, adam, X, Y) for _ in range(300)]
print("loss %.3f -> %.4f" % (losses[0], losses[-1]))
