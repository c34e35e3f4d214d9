# Reverse-mode autodiff on numpy arrays
#
# Everything in ergl trains through a small tape-based autodiff engine.
# This walk-through fits a two-layer regressor with it and then checks
# the tape gradients against central differences.

import numpy as np

from ergl.numerics import functional as F
from ergl.numerics.gradcheck import finite_diff_report
from ergl.numerics.nn import Linear, Module
from ergl.numerics.optim import AdamW
from ergl.numerics.tensor import GradTape, Tensor, shadow64

rng = np.random.default_rng(0)

# A tensor is a float array plus an optional .grad. Operations are only
# recorded while a GradTape is open.

x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
with GradTape() as tape:
    y = (x * x).sum()
tape.backward(y)
print("d/dx sum(x^2) =", x.grad)  # 2x


# ## A tiny regression problem
#
# y = sin(3x) sampled on [-1, 1], fitted by Linear -> ReLU -> Linear.

class MLP(Module):
    def __init__(self, rng):
        super().__init__()
        self.fc1 = Linear(1, 32, rng)
        self.fc2 = Linear(32, 1, rng)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


xs = np.linspace(-1, 1, 64, dtype=np.float32)[:, None]
ys = np.sin(3 * xs)
net = MLP(rng)
opt = AdamW(net.parameters(), lr=1e-2, weight_decay=0.0)

for step in range(301):
    opt.zero_grad()
    with GradTape() as tape:
        loss = F.loss_mse(net(Tensor(xs)), Tensor(ys))
    tape.backward(loss)
    opt.step()
    if step % 100 == 0:
        print(f"step {step:3d}  mse {loss.item():.5f}")


# ## Checking the gradients
#
# In float64 the tape and central differences (step 1e-3) should agree to
# well under 1e-4 relative error. The checker nudges the step down when a
# perturbation flips a ReLU, since a kink there would poison the estimate.

with shadow64():
    small = MLP(np.random.default_rng(1))
w = rng.normal(size=(5, 1))
report = finite_diff_report(lambda t: (small(t) * Tensor(w)).sum(), rng.normal(size=(5, 1)))
print(f"max relative error {report.max_error:.2e}, refined entries {report.refined}")
