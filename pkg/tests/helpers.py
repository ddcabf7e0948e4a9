import random
from dataclasses import dataclass


@dataclass(eq=False)
class Pkt:
    id: int
    size: int = 2000
    fid: int = 1
    src_addr: str = "0.0"
    dst_addr: str = "7.0"


def random_ops(rng: random.Random, n: int, flows: int = 5, sizes=(40, 2000)):
    """A mixed enqueue/dequeue sequence; ('enq', Pkt) or ('deq', None)."""
    ops = []
    for i in range(n):
        if rng.random() < 0.6:
            f = rng.randrange(flows)
            ops.append(("enq", Pkt(i, rng.choice(sizes), f + 1, f"{f}.0", f"{f + 7}.0")))
        else:
            ops.append(("deq", None))
    return ops


def replay(queue, ops, start=0.0, step=0.001):
    """Run ops against a discipline; returns the event log and checks the byte bound."""
    log = []
    t = start
    for kind, pkt in ops:
        t += step
        if kind == "enq":
            dropped = queue.enqueue(pkt, t)
            log.append(("enq", pkt.id, tuple(p.id for p in dropped)))
        else:
            out = queue.dequeue(t)
            log.append(("deq", None if out is None else out.id))
        assert 0 <= queue.backlog_bytes <= queue.buffer_bytes
    return log
