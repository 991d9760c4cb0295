# Walk a latent vector through the generator and a CSI vector through the
# shared discriminator/classifier.
import numpy as np

from csigan.models import (
    build_discriminator,
    build_generator,
    build_simplified_generator,
    classify,
    discriminate,
    generate,
    logits,
    softmax_normalizer,
)

g = build_generator(seed=0)
d = build_discriminator(seed=1)

print("G widths:", g.layer_widths())  # 108 -> 112 -> 116 -> 120, cropped output 120
print("D widths:", d.layer_widths())  # 120 -> 116 -> 112 -> 108
print("G parameters:", g.n_params(), " D parameters:", d.n_params())
print("simplified G parameters:", build_simplified_generator(0).n_params())

z = np.random.default_rng(0).normal(size=100)
x = generate(g, z)
print("fake CSI: length", x.shape[0], "range", x.min().round(4), x.max().round(4))

# both heads read one logit vector
c = logits(d, x)
q = discriminate(d, x)
probs, cls = classify(d, x)
Z = softmax_normalizer(c)
print("P(real) =", q, " Z/(Z+1) =", Z / (Z + 1))
print("predicted location", cls, "with probability", probs.max().round(4))

# an untrained D cannot tell anything apart: q sits near 16/17
print("16/17 =", 16 / 17)
