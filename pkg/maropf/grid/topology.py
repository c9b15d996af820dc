from collections import deque

import numpy as np

from maropf.utils import MaropfError


class GridError(MaropfError, ValueError):
    pass


class CycleDetected(GridError):
    pass


class DisconnectedBus(GridError):
    pass


class Diagnostic:
    def __init__(self, kind, bus, message):
        self.kind = kind
        self.bus = bus
        self.message = message

    def __repr__(self):
        return f"Diagnostic({self.kind}, bus={self.bus}: {self.message})"


class TopologyMatrices:
    """
    G: line adjacency, G[k, l] = 1 if line k feeds line l.
    H: closure (I - G)^-1, H[k, l] = 1 if line k lies on the slack -> l path.
    R, X: path resistance/reactance, R = H^T diag(r) H.
    e: indicator of lines leaving the slack bus.
    """

    def __init__(self, G, H, R, X, up, order, children, r, x):
        self.G = G
        self.H = H
        self.R = R
        self.X = X
        self.up = up
        self.order = order
        self.children = children
        self.e = (up == 0).astype(float)
        self.r = r
        self.x = x
        self.z2 = r ** 2 + x ** 2

    @property
    def n(self):
        return self.H.shape[0]

    def v_up(self, v, v0):
        """Sending-end squared voltage of every line, v over lines."""
        v = np.asarray(v, dtype=float)
        padded = np.concatenate([[v0], v])
        return padded[self.up]


def validate_radial(network):
    diagnostics = []
    ids = [bus.id for bus in network.buses]
    if ids != list(range(len(ids))):
        diagnostics.append(
            Diagnostic("DisconnectedBus", None, f"bus indices not contiguous: {ids}")
        )
        return diagnostics
    n_bus = len(ids)

    parent = {}
    for line in network.lines:
        if line.id == 0:
            diagnostics.append(Diagnostic("CycleDetected", 0, "line ends at the slack"))
            continue
        if line.id in parent:
            diagnostics.append(
                Diagnostic(
                    "CycleDetected",
                    line.id,
                    f"two parents ({parent[line.id]}, {line.up})",
                )
            )
            continue
        if not 0 <= line.id < n_bus or not 0 <= line.up < n_bus:
            diagnostics.append(
                Diagnostic("DisconnectedBus", line.id, f"line {line.up}->{line.id} leaves the bus set")
            )
            continue
        parent[line.id] = line.up

    for bus in range(1, n_bus):
        if bus not in parent:
            diagnostics.append(Diagnostic("DisconnectedBus", bus, "no incoming line"))
    if diagnostics:
        return diagnostics

    # every walk towards the root must reach the slack within n_bus steps
    for bus in range(1, n_bus):
        seen = set()
        node = bus
        while node != 0:
            if node in seen:
                diagnostics.append(Diagnostic("CycleDetected", bus, "walk to slack loops"))
                break
            seen.add(node)
            node = parent[node]
    return diagnostics


def raise_diagnostics(diagnostics):
    first = diagnostics[0]
    if first.kind == "CycleDetected":
        raise CycleDetected(first.message)
    raise DisconnectedBus(first.message)


def check_closure(G, H, atol=1e-12):
    """Raises GridError unless H is the closure (I - G)^-1."""
    n = G.shape[0]
    residual = np.max(np.abs(H @ (np.eye(n) - G) - np.eye(n)), initial=0.0)
    if residual > atol:
        raise GridError(f"Path closure disagrees with (I - G)^-1 by {residual:.3e}")


def build_topology(network):
    diagnostics = validate_radial(network)
    if diagnostics:
        raise_diagnostics(diagnostics)

    n = network.n_line
    up = network.up
    children = [[] for _ in range(n + 1)]
    for line in network.lines:
        children[line.up].append(line.id)

    order = []
    queue = deque(children[0])
    while queue:
        l = queue.popleft()
        order.append(l)
        queue.extend(children[l])

    G = np.zeros((n, n))
    H = np.zeros((n, n))
    for l in order:
        k = up[l - 1]
        H[:, l - 1] = H[:, k - 1] if k > 0 else 0.0
        H[l - 1, l - 1] = 1.0
        if k > 0:
            G[k - 1, l - 1] = 1.0

    check_closure(G, H)

    R = H.T @ np.diag(network.r) @ H
    X = H.T @ np.diag(network.x) @ H
    return TopologyMatrices(
        G, H, R, X, up, np.array(order, dtype=int), children, network.r, network.x
    )


def downstream_load(network, topo, factor=1.1):
    """Flow caps from the downstream-load rule: factor * H @ load."""
    return factor * topo.H @ network.load_p, factor * topo.H @ network.load_q
