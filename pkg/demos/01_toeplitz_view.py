# Convolution and transposed convolution as banded matrices.
#
# A 1-D conv layer is a sum of Toeplitz blocks, one per (kernel, input slice).
# The transposed conv used by the generator is the same matrix, transposed.
import numpy as np

from csigan.tensor_engine import (
    ConvKernelBank,
    FeatureMap,
    conv1d_forward,
    conv_matrix_full,
    conv_toeplitz,
    deconv1d_forward,
    grad_check,
)

rng = np.random.default_rng(0)

# one slice, one kernel: [1, 0, -1] is a crude derivative
bank = ConvKernelBank(np.array([[[1.0], [0.0], [-1.0]]]), np.zeros(1))
a = FeatureMap.from_array(np.array([[1.0, 2.0, 3.0, 4.0]]))
print("conv [1,2,3,4] with [1,0,-1]:", conv1d_forward(a, bank).as_array().ravel())

# the same thing as a matrix: rows slide the kernel one step to the right
print(conv_toeplitz(bank.kernels[0, :, 0], 4))

# deconv spreads each input sample over F outputs
ones = ConvKernelBank(np.ones((1, 3, 1)), np.zeros(1))
v = FeatureMap.from_array(np.array([[1.0, 2.0]]))
print("deconv [1,2] with [1,1,1]:", deconv1d_forward(v, ones).as_array().ravel())

# a bank with several slices: the big block matrix matches the layer exactly
bank = ConvKernelBank(rng.normal(size=(3, 5, 2)), rng.normal(size=3))
x = rng.normal(size=(2, 12))  # 2 slices, width 12
W = conv_matrix_full(bank, 12)
print("block matrix shape", W.shape)
out = conv1d_forward(x, bank)
stacked = W @ x.ravel() + np.repeat(bank.biases, 8)
print("max |layer - matrix| =", np.abs(out.ravel() - stacked).max())

# adjointness: <conv(a), v> == <a, deconv(v)> with the kernel bank transposed
nobias = ConvKernelBank(bank.kernels, np.zeros(3))
v = rng.normal(size=(3, 8))
lhs = np.sum(conv1d_forward(x, nobias) * v)
rhs = np.sum(x * deconv1d_forward(v, nobias.adjoint_bank()))
print("adjoint gap", abs(lhs - rhs))

# finite differences agree with the analytic backward pass
from csigan.tensor_engine import Conv1D

layer = Conv1D(bank)
xin = rng.normal(size=(2, 12, 2))  # channels-last batch
r = rng.normal(size=(2, 8, 3))
layer.forward(xin)
layer.backward(r)
err = grad_check(lambda: float(np.sum(layer.forward(xin) * r)), [bank.kernels, bank.biases],
                 [layer.grads["kernels"], layer.grads["biases"]])
print("worst relative gradient error", err)
