# What the generator produces as training goes on, judged by the classifier.
import numpy as np

from csigan.dataset import normalize, synth_generate
from csigan.experiments import class_mean_distances, cmd_dump_fakes, lag1_autocorrelation
from csigan.trainer import TrainConfig

data = normalize(synth_generate(seed=0))
cfg = TrainConfig(epochs=4, steps_per_epoch=200, labeled_per_class=1, seed=0)
dumps, history = cmd_dump_fakes(cfg, data, epochs=[0, 1, 4], samples=256)

first = class_mean_distances(dumps[0], data)
for dump in dumps:
    dist = class_mean_distances(dump, data)
    hit = len(np.unique(dump.predicted))
    print(
        "epoch %d: lag-1 autocorr %.3f, classes predicted %2d, mean distance to class mean %.3f, closer than epoch 0 for %d/16"
        % (dump.epoch, lag1_autocorrelation(dump.fakes), hit, dist.mean(), (dist < first).sum())
    )

# one fake next to a real sample of the same predicted class
last = dumps[-1]
print("fake :", np.round(last.fakes[0, :10], 2))
print("real :", np.round(last.real[0, :10], 2), "(label %d)" % last.predicted[0])
