import numpy as np

from macid.channel_core import Alphabet, MacChannel, SequenceDistribution


def constant_channel(q, x=2, y=2):
    q = np.asarray(q, dtype=float)
    return MacChannel.memoryless(np.broadcast_to(q, (x, y, q.shape[0])).copy())


def point(alphabet_size, n, index):
    return SequenceDistribution.point_mass(Alphabet(alphabet_size), n, index)
