import threading

import pytest

from badgesim.sim.bridge import BridgeServer


@pytest.fixture
def bridge():
    """A simulated badge behind a localhost socket, served on a thread."""

    def start(**kwargs):
        server = BridgeServer(port=0, **kwargs)
        thread = threading.Thread(target=server.serve_one_client, daemon=True)
        thread.start()
        servers.append((server, thread))
        return server.address[1]

    servers = []
    yield start
    for server, thread in servers:
        server.close()
        thread.join(timeout=5)
