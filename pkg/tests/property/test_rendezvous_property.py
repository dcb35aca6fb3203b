"""Property-based tests for key-value isolation and barriers using Hypothesis."""

import threading
import time
from concurrent.futures import ThreadPoolExecutor

from hypothesis import given, settings, strategies as st

from src.rendezvous import client_init, start_server

KEYS = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12)


class TestKeyValueProperty:
    """Every rank sees every other rank's puts after a barrier, and only those."""

    @settings(max_examples=200, deadline=None)
    @given(
        size=st.sampled_from([2, 3, 5]),
        data=st.data(),
    )
    def test_puts_visible_after_barrier(self, size, data):
        """Property: after one barrier each rank reads exactly the values the owners put."""
        keys = data.draw(st.lists(st.lists(KEYS, max_size=3, unique=True), min_size=size, max_size=size))
        values = {f"{rank}/{key}": f"v{rank}:{key}" for rank, owned in enumerate(keys) for key in owned}

        with start_server("127.0.0.1:0", [("world", size)]) as server:

            def rank_main(rank: int):
                session = client_init(server.endpoint, "world", rank, timeout=10.0)
                with session:
                    for key in keys[rank]:
                        session.put(f"{rank}/{key}", values[f"{rank}/{key}"])
                    epoch = session.barrier()
                    seen = {k: session.get(k) for k in values}
                    missing = session.get(f"{rank}/never-put")
                    second = session.barrier()
                return epoch, second, seen, missing

            with ThreadPoolExecutor(max_workers=size) as executor:
                results = list(executor.map(rank_main, range(size)))

        for epoch, second, seen, missing in results:
            assert second == epoch + 1
            assert seen == values
            assert missing is None
        assert len({epoch for epoch, *_ in results}) == 1


class TestGroupIsolationProperty:
    """Two groups writing the same keys never see each other's values."""

    @settings(max_examples=100, deadline=None)
    @given(
        sizes=st.tuples(st.sampled_from([1, 2, 3]), st.sampled_from([1, 2, 3])),
        shared=st.lists(KEYS, min_size=1, max_size=4, unique=True),
        private=KEYS,
    )
    def test_same_keys_in_two_groups(self, sizes, shared, private):
        """Property: every rank reads its own group's values, and keys put only elsewhere stay absent."""
        groups = [("a", sizes[0]), ("b", sizes[1])]

        with start_server("127.0.0.1:0", groups) as server:

            def rank_main(member: tuple[str, int]):
                group, rank = member
                session = client_init(server.endpoint, group, rank, timeout=10.0)
                with session:
                    if rank == 0:
                        for key in shared:
                            session.put(f"s/{key}", f"{group}:{key}")
                        if group == "a":
                            session.put(f"only-a/{private}", "a")
                    session.barrier()
                    seen = {key: session.get(f"s/{key}") for key in shared}
                    leaked = session.get(f"only-a/{private}") if group == "b" else None
                    session.barrier()
                return group, seen, leaked

            members = [(group, rank) for group, size in groups for rank in range(size)]
            with ThreadPoolExecutor(max_workers=len(members)) as executor:
                results = list(executor.map(rank_main, members))

        for group, seen, leaked in results:
            assert seen == {key: f"{group}:{key}" for key in shared}
            assert leaked is None


class TestBarrierProperty:
    """No rank leaves a barrier epoch before every rank has entered it."""

    @settings(max_examples=200, deadline=None)
    @given(
        size=st.sampled_from([2, 3, 5]),
        data=st.data(),
    )
    def test_no_early_exit_under_delays(self, size, data):
        """Property: with random per-rank delays before each of three barriers, exits follow all entries."""
        rounds = 3
        delays = data.draw(
            st.lists(
                st.lists(st.floats(min_value=0.0, max_value=0.005), min_size=rounds, max_size=rounds),
                min_size=size,
                max_size=size,
            )
        )
        entered = [0] * rounds
        lock = threading.Lock()

        with start_server("127.0.0.1:0", [("world", size)]) as server:

            def rank_main(rank: int) -> list[tuple[int, int]]:
                observed = []
                with client_init(server.endpoint, "world", rank, timeout=10.0) as session:
                    for r in range(rounds):
                        time.sleep(delays[rank][r])
                        with lock:
                            entered[r] += 1
                        epoch = session.barrier()
                        with lock:
                            observed.append((epoch, entered[r]))
                    session.barrier()
                return observed

            with ThreadPoolExecutor(max_workers=size) as executor:
                results = list(executor.map(rank_main, range(size)))

        for observed in results:
            assert [epoch for epoch, _ in observed] == list(range(rounds))
            assert all(count == size for _, count in observed)
