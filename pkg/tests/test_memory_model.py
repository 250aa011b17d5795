"""Per-GPU memory accounting with and without model sharing."""

import random

import pytest

from gshare_sim import (
    MissingConfigurationError,
    DEFAULT_GPU_MEMORY_MB,
    GpuMemoryState,
    MemorySpec,
    ValidationError,
    admit,
    footprint,
    ingest_profiles,
)

VIT_HUGE = MemorySpec(mem_noshare_mb=4735.0, mem_runtime_mb=2101.0,
                      mem_server_mb=2979.0)


def fill(state, specs, function_id, count):
    for _ in range(count):
        state.add_pod(function_id)
    return footprint(state, specs)


class TestFootprint:
    def test_empty_gpu_is_zero(self):
        state = GpuMemoryState()
        assert footprint(state, {}) == 0.0

    def test_vit_single_pod_sharing(self):
        state = GpuMemoryState(sharing=True)
        specs = {"vit": VIT_HUGE}
        assert fill(state, specs, "vit", 1) == 5080.0

    def test_vit_three_pods_sharing(self):
        state = GpuMemoryState(sharing=True)
        specs = {"vit": VIT_HUGE}
        assert fill(state, specs, "vit", 3) == 9282.0

    def test_vit_three_pods_without_sharing(self):
        state = GpuMemoryState(sharing=False)
        specs = {"vit": VIT_HUGE}
        assert fill(state, specs, "vit", 3) == 14205.0

    def test_remove_pod_reverses_add(self):
        state = GpuMemoryState(sharing=True)
        specs = {"vit": VIT_HUGE}
        state.add_pod("vit")
        state.add_pod("vit")
        state.remove_pod("vit")
        assert footprint(state, specs) == 5080.0
        state.remove_pod("vit")
        assert footprint(state, specs) == 0.0


class TestAdmit:
    def test_first_vit_pod_fits_on_default_gpu(self):
        state = GpuMemoryState(sharing=True)
        assert admit(state, {"vit": VIT_HUGE}, "vit")

    def test_oversized_spec_rejected_outright(self):
        big = MemorySpec(mem_noshare_mb=99999.0, mem_runtime_mb=90000.0,
                         mem_server_mb=20000.0)
        state = GpuMemoryState(sharing=True)
        assert not admit(state, {"big": big}, "big")

    def test_admission_counts_vs_capacity_fixture(self, data_dir):
        """The ingested ResNeXt spec fits 7 pods with sharing but only 4
        when every pod loads its own copy."""
        profiles = ingest_profiles(str(data_dir / "model_memory_profiles.csv"))
        spec = profiles["resnext101"].mem
        specs = {"resnext101": spec}

        shared = GpuMemoryState(sharing=True)
        count_shared = 0
        while admit(shared, specs, "resnext101"):
            shared.add_pod("resnext101")
            count_shared += 1
        assert count_shared == 7

        private = GpuMemoryState(sharing=False)
        count_private = 0
        while admit(private, specs, "resnext101"):
            private.add_pod("resnext101")
            count_private += 1
        assert count_private == 4

    def test_admit_is_monotone_in_pod_count(self):
        """Once admission says no, adding more pods never turns it around."""
        rng = random.Random(11)
        for _ in range(200):
            noshare = rng.uniform(500, 9000)
            runtime = rng.uniform(100, noshare)
            server = rng.uniform(100, 6000)
            spec = MemorySpec(noshare, runtime, server)
            specs = {"m": spec}
            state = GpuMemoryState(sharing=rng.random() < 0.5)
            rejected = False
            for _ in range(60):
                ok = admit(state, specs, "m")
                if rejected:
                    assert not ok
                if not ok:
                    rejected = True
                state.add_pod("m")

    def test_sharing_beats_no_sharing_past_the_breakeven_count(self):
        rng = random.Random(23)
        for _ in range(200):
            noshare = rng.uniform(1000, 8000)
            runtime = rng.uniform(200, noshare - 1)
            server = rng.uniform(100, 5000)
            spec = MemorySpec(noshare, runtime, server)
            specs = {"m": spec}
            breakeven = server / (noshare - runtime)
            for count in range(1, 12):
                shared = GpuMemoryState(sharing=True, capacity_mb=1e9)
                private = GpuMemoryState(sharing=False, capacity_mb=1e9)
                a = fill(shared, specs, "m", count)
                b = fill(private, specs, "m", count)
                if count > breakeven:
                    assert a < b


class TestValidation:
    def test_negative_memory_rejected(self):
        with pytest.raises(ValidationError):
            MemorySpec(-1.0, 100.0, 100.0)

    def test_unknown_function_spec_is_an_error(self):
        state = GpuMemoryState()
        state.add_pod("mystery")
        with pytest.raises(MissingConfigurationError):
            footprint(state, {})

    def test_default_capacity_matches_v100(self):
        assert DEFAULT_GPU_MEMORY_MB == 16384.0
