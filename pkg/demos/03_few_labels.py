# Sixteen labels, one per location: the supervised CNN against the
# semi-supervised DCGAN that also sees the 6400 unlabeled samples.
#
# A short schedule (4 epochs of 200 minibatches) keeps this to a few minutes.
import logging
from dataclasses import replace

from csigan.dataset import nearest_template_accuracy, normalize, select_labeled_subset, synth_generate
from csigan.trainer import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

data = normalize(synth_generate(seed=0))
print("train", data.train_x.shape, "test", data.test_x.shape)
print("nearest-template accuracy: %.2f%%" % (100 * nearest_template_accuracy(data)))

data = select_labeled_subset(data, n_per_class=1, seed=0)
print("labeled samples:", len(data.labeled_idx))

base = TrainConfig(epochs=4, steps_per_epoch=200, labeled_per_class=1, seed=0)

_, _, cnn = train(replace(base, cnn_only=True), data)
_, _, gan = train(base, data)

for name, h in (("cnn", cnn), ("dcgan", gan)):
    print("%-6s" % name, " ".join("%.1f" % r.test_accuracy for r in h.records))
