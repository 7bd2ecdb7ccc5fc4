"""Tests for memt5.config and memt5.presets modules."""

import json
from pathlib import Path

import pytest
import yaml

from memt5.config import (
    ModelConfig,
    OptimizerKind,
    RunConfig,
    ScheduleConfig,
    ScheduleKind,
    Task,
    Variant,
    apply_overrides,
    dump_run_config,
    flatten,
    load_run_config,
    unflatten,
)
from memt5.exceptions import ConfigurationError, DataError
from memt5.presets import PRESETS, get_preset, list_presets


class TestVariant:
    def test_capabilities(self) -> None:
        assert Variant.MEM.uses_selector
        assert Variant.MEM.uses_mem_query
        assert Variant.MEM_WS.uses_mem_query
        assert not Variant.MEM_WS_WMA.uses_mem_query
        assert Variant.MEM_WS.decodes_from_memory
        assert Variant.MEM_WS_WMA.decodes_from_memory
        assert not Variant.BASELINE.decodes_from_memory


class TestModelConfig:
    def test_source_len(self) -> None:
        config = ModelConfig(n_chunks=4, chunk_len=128, mem_tokens=2)
        assert config.source_len == 512
        assert config.augmented_chunk_len == 130

    def test_heads_must_divide_model(self) -> None:
        with pytest.raises(ValueError, match="num_heads"):
            ModelConfig(d_model=64, num_heads=4, d_kv=8)

    def test_baseline_needs_single_chunk_without_memory(self) -> None:
        with pytest.raises(ValueError, match="baseline"):
            ModelConfig(variant=Variant.BASELINE, n_chunks=4, mem_tokens=0)
        with pytest.raises(ValueError, match="baseline"):
            ModelConfig(variant=Variant.BASELINE, n_chunks=1, mem_tokens=2)

    def test_memory_decoders_need_memory(self) -> None:
        with pytest.raises(ValueError, match="mem_tokens"):
            ModelConfig(variant=Variant.MEM_WS, mem_tokens=0)

    def test_unknown_field_rejected(self) -> None:
        with pytest.raises(ValueError, match="d_modle"):
            ModelConfig(d_modle=3)  # type: ignore[call-arg]

    def test_frozen(self) -> None:
        config = ModelConfig()
        with pytest.raises(ValueError):
            config.d_model = 3  # type: ignore[misc]


class TestScheduleConfig:
    def test_warmup_longer_than_total_rejected(self) -> None:
        with pytest.raises(ValueError, match="warmup_steps"):
            ScheduleConfig(warmup_steps=100, total_steps=50)

    def test_constant_ignores_warmup_bound(self) -> None:
        config = ScheduleConfig(kind=ScheduleKind.CONSTANT, warmup_steps=100, total_steps=50)
        assert config.total_steps == 50


class TestRunConfig:
    def test_defaults(self) -> None:
        run = RunConfig()
        assert run.batch_size == 160
        assert run.epochs == 100
        assert run.seed == 42
        assert run.model.dropout == 0.1
        assert run.optimizer is OptimizerKind.ADAFACTOR
        assert run.task is Task.MLM

    def test_flat_keys_cover_every_leaf(self) -> None:
        keys = RunConfig.flat_keys()
        assert "model.d_model" in keys
        assert "schedule.peak_lr" in keys
        assert "span_corruption.corruption_rate" in keys
        assert "model" not in keys
        assert set(RunConfig().to_flat()) == set(keys)

    def test_micro_batches_must_divide_batch(self) -> None:
        with pytest.raises(ValueError, match="micro_batches"):
            RunConfig(batch_size=10, micro_batches=3)

    def test_from_mapping_reports_dotted_location(self) -> None:
        with pytest.raises(ConfigurationError, match="model.d_model"):
            RunConfig.from_mapping({"model.d_model": -1})

    def test_negative_seed_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="seed"):
            apply_overrides(RunConfig(), ["seed=-1"])

    def test_from_mapping_rejects_unknown_keys(self) -> None:
        with pytest.raises(ConfigurationError, match="mdoel"):
            RunConfig.from_mapping({"mdoel.d_model": 8})

    def test_flatten_unflatten_inverse(self) -> None:
        nested = {"a": {"b": 1, "c": {"d": 2}}, "e": 3}
        assert unflatten(flatten(nested)) == nested

    def test_unflatten_conflict(self) -> None:
        with pytest.raises(ConfigurationError, match="conflicts"):
            unflatten({"model": 3, "model.d_model": 8})


class TestConfigFiles:
    def test_dump_then_load_is_lossless(self, tmp_path: Path) -> None:
        run = RunConfig(
            name="roundtrip",
            model=ModelConfig(variant=Variant.MEM_WS, n_chunks=2, chunk_len=64, mem_tokens=1),
            schedule=ScheduleConfig(kind=ScheduleKind.CONSTANT, peak_lr=5e-5),
            optimizer=OptimizerKind.ADAMW,
            train_path=tmp_path / "train.txt",
            eval_max_examples=10,
        )
        path = tmp_path / "run.json"
        dump_run_config(run, path)
        assert load_run_config(path) == run
        assert not path.with_suffix(".json.tmp").exists()

    def test_dumped_file_is_flat(self, tmp_path: Path) -> None:
        path = tmp_path / "run.json"
        dump_run_config(RunConfig(), path)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["model.n_chunks"] == 4
        assert all(not isinstance(value, dict) for value in data.values())

    def test_nested_yaml_accepted(self, tmp_path: Path) -> None:
        path = tmp_path / "run.yaml"
        path.write_text(
            yaml.safe_dump({"name": "y", "model": {"variant": "mem_ws_wma", "mem_tokens": 1}}),
            encoding="utf-8",
        )
        run = load_run_config(path)
        assert run.model.variant is Variant.MEM_WS_WMA
        assert run.model.mem_tokens == 1

    def test_missing_file_is_data_error(self, tmp_path: Path) -> None:
        with pytest.raises(DataError):
            load_run_config(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="cannot parse"):
            load_run_config(path)

    def test_top_level_must_be_object(self, tmp_path: Path) -> None:
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="object"):
            load_run_config(path)


class TestOverrides:
    def test_values_parsed_as_json(self) -> None:
        run = apply_overrides(
            RunConfig(),
            ["model.mem_tokens=1", "epochs=3", "name=trial", "schedule.peak_lr=0.001"],
        )
        assert run.model.mem_tokens == 1
        assert run.epochs == 3
        assert run.name == "trial"
        assert run.schedule.peak_lr == 0.001

    def test_unknown_key(self) -> None:
        with pytest.raises(ConfigurationError, match="unknown config key 'model.dmodel'"):
            apply_overrides(RunConfig(), ["model.dmodel=3"])

    def test_malformed_override(self) -> None:
        with pytest.raises(ConfigurationError, match="key=value"):
            apply_overrides(RunConfig(), ["epochs"])

    def test_override_revalidates(self) -> None:
        with pytest.raises(ConfigurationError, match="baseline"):
            apply_overrides(RunConfig(), ["model.variant=baseline"])


class TestPresets:
    def test_full_scale_stub(self) -> None:
        run = get_preset("full_mlm_512_4chunks")
        assert run.model.variant is Variant.MEM
        assert (run.model.n_chunks, run.model.chunk_len, run.model.mem_tokens) == (4, 128, 2)
        assert run.batch_size == 160
        assert run.epochs == 100
        assert run.optimizer is OptimizerKind.ADAFACTOR
        assert run.schedule.warmup_steps == 2000
        assert run.schedule.peak_lr == 0.005
        assert not run.scaled_down

    def test_desk_presets_are_flagged(self) -> None:
        desk = [PRESETS[name] for name in list_presets() if name != "full_mlm_512_4chunks"]
        assert desk
        assert all(run.scaled_down for run in desk)

    def test_learning_rates_follow_schedule(self) -> None:
        assert get_preset("t5memws_2mem_af_linear").schedule.peak_lr == 3e-3
        assert get_preset("t5memwswma_1mem_adm_const").schedule.peak_lr == 5e-5
        assert get_preset("t5mem_af_linear").schedule.peak_lr == 0.005

    def test_qa_presets_start_from_pretraining(self) -> None:
        run = get_preset("t5mem_hp_4_chunks_af_const")
        assert run.task is Task.QA
        assert run.init_checkpoint is not None

    def test_every_variant_has_presets(self) -> None:
        variants = {run.model.variant for run in PRESETS.values()}
        assert variants == set(Variant)

    def test_unknown_preset(self) -> None:
        with pytest.raises(ConfigurationError, match="unknown preset"):
            get_preset("nope")
