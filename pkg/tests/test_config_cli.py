import csv
import json

import pytest

from regdiff.backend.runs import RunJob, execute_all
from regdiff.cli import EXIT_CONFIG, EXIT_OK, main
from regdiff.config import PROJECT_ROOT
from regdiff.errors import ConfigParse, ValidationFailure
from regdiff.metrics.records import RecordRow
from regdiff.orchestration.experiment import Experiment
from regdiff.orchestration.loader import (
    apply_override,
    load_config,
    parse_value,
    read_document,
    resolve_key,
    validate,
)
from regdiff.orchestration.manager import Manager
from regdiff.orchestration.models import ExperimentConfig
from regdiff.orchestration.presets import PRESETS, load_preset, preset_names
from regdiff.orchestration.repository import RecordRepository

MINIMAL = """
name = "minimal"
task = "run"
output = {output}

[network]
n_agents = 1
topology = "complete"
rule = "uniform-averaging"

[problem]
dimension = 1

[[agents]]
noise_sigma = 0.0
risk = {{ kind = "quadratic", hessian = [[1.0]], linear = [2.0] }}
regularizer = {{ kind = "l1", rho = 1.0 }}

[algorithm]
mu = 0.1
delta = 0.1
iterations = 10
"""


@pytest.fixture
def minimal_config(tmp_path):
    path = tmp_path / "minimal.toml"
    path.write_text(MINIMAL.format(output=json.dumps(str(tmp_path / "out"))))
    return path


def _document(**algorithm) -> dict:
    data = load_preset("bias-1d")
    data["algorithm"].update(algorithm)
    return data


@pytest.mark.parametrize(
    "text, expected",
    [("0.01", 0.01), ("3", 3), ("true", True), ("[0.1, 0.2]", [0.1, 0.2]), ('"ring"', "ring"), ("ring", "ring")],
)
def test_parse_value(text, expected):
    assert parse_value(text) == expected


def test_resolve_key():
    assert resolve_key("mu") == ["algorithm", "mu"]
    assert resolve_key("deltas") == ["verification", "deltas"]
    assert resolve_key("output") == ["output"]
    assert resolve_key("agents.0.regularizer.rho") == ["agents", 0, "regularizer", "rho"]


@pytest.mark.parametrize("key", ["seed", "no_such_key"])
def test_resolve_key_rejects_ambiguous_and_unknown_keys(key):
    with pytest.raises(ConfigParse):
        resolve_key(key)


def test_override_replaces_its_exclusive_partner():
    data = {"algorithm": {"mu_sweep": [0.1, 0.2], "delta": 0.5}}
    apply_override(data, "mu=0.05")
    apply_override(data, "kappa=0.3")
    assert data == {"algorithm": {"mu": 0.05, "kappa": 0.3}}


def test_override_walks_into_lists():
    data = load_preset("bias-group")
    apply_override(data, "agents.1.regularizer.rho=2.5")
    assert data["agents"][1]["regularizer"]["rho"] == 2.5
    with pytest.raises(ConfigParse):
        apply_override(data, "agents.9.count=1")


@pytest.mark.parametrize("assignment", ["mu", "=0.1", "name.first=x"])
def test_malformed_overrides(assignment):
    with pytest.raises(ConfigParse):
        apply_override(load_preset("bias-1d"), assignment)


def test_read_document_errors(tmp_path):
    with pytest.raises(ConfigParse):
        read_document(tmp_path / "missing.toml")
    with pytest.raises(ConfigParse):
        read_document("preset:no-such-preset")

    broken = tmp_path / "broken.toml"
    broken.write_text("[network\nn_agents = ")
    with pytest.raises(ConfigParse):
        read_document(broken)

    broken_json = tmp_path / "broken.json"
    broken_json.write_text("{")
    with pytest.raises(ConfigParse):
        read_document(broken_json)


def test_json_documents_are_accepted(tmp_path):
    path = tmp_path / "bias.json"
    path.write_text(json.dumps(PRESETS["bias-1d"]))
    assert load_config(path).model_dump() == load_config("preset:bias-1d").model_dump()


def test_presets_are_fresh_copies():
    data = load_preset("bias-1d")
    data["algorithm"]["mu"] = 1.0
    assert PRESETS["bias-1d"]["algorithm"]["mu"] == 0.05


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_validates(name):
    config = load_config(f"preset:{name}")
    assert config.name == name
    assert config.network.n_agents == sum(group.count for group in config.agents)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["network"].update(n_agents=2),
        lambda d: d["algorithm"].update(mu=0.5),
        lambda d: d["algorithm"].update(kappa=0.3),
        lambda d: d["algorithm"].update(delta=None, kappa=0.6),
        lambda d: d["algorithm"].update(mu_sweep=[0.01]),
        lambda d: d["problem"].update(dimension=0),
        lambda d: d["network"].update(unknown=1),
        lambda d: d["agents"][0]["regularizer"].update(kind="group_l1", indices=[0, 3]),
        lambda d: d["agents"][0].update(role="structure_informed"),
        lambda d: d["verification"].update(deltas=[0.1, 0.01]),
        lambda d: d["metrics"].update(test_size=10),
    ],
    ids=[
        "roster",
        "mu_above_two_delta",
        "delta_and_kappa",
        "kappa_range",
        "mu_and_mu_sweep",
        "dimension",
        "extra_field",
        "group_index",
        "role",
        "bias_deltas",
        "test_set_template",
    ],
)
def test_invalid_configurations(mutate):
    data = load_preset("bias-1d")
    mutate(data)
    with pytest.raises(ValidationFailure):
        validate(data)


def test_msd_task_needs_a_target():
    data = load_preset("msd-quadratic")
    data["metrics"]["target"] = "none"
    with pytest.raises(ValidationFailure):
        validate(data)


def test_kappa_sets_delta_per_step():
    config = validate(_document(delta=None, kappa=0.25 + 0.05, mu=0.01))
    assert config.algorithm.delta_for(0.01) == pytest.approx(0.01**0.2)


def test_scaled_iterations():
    data = load_preset("msd-quadratic")
    algorithm = validate(data).algorithm
    assert algorithm.iterations_for(4e-3) == 4000
    assert algorithm.iterations_for(1e-3) == 16000


def test_load_config_applies_overrides_in_order():
    config = load_config("preset:bias-1d", ["deltas=[0.1, 0.01, 0.001]", "algorithm.seed=7", "mu=0.02"])
    assert config.verification.deltas == [0.1, 0.01, 0.001]
    assert config.algorithm.seed == 7
    assert config.algorithm.mu == 0.02


def test_preset_list(capsys):
    assert main(["preset", "--list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[: len(preset_names())] == preset_names()
    assert "paper-fig3 (alias of division-of-labor)" in lines


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "missing.toml"],
        ["run", "preset:no-such-preset"],
        ["run", "preset:bias-1d", "--override", "mu=5.0"],
        ["verify", "bias", "preset:bias-1d", "--override", "seed=1"],
    ],
    ids=["missing_file", "unknown_preset", "invalid_value", "ambiguous_key"],
)
def test_configuration_errors_exit_with_two(argv):
    assert main(argv) == EXIT_CONFIG


def test_preset_dump_echoes_the_resolved_config(tmp_path):
    assert main(["preset", "bias-1d", "--dump", "--out", str(tmp_path)]) == EXIT_OK
    echoed = json.loads((tmp_path / "resolved_config.json").read_text())
    assert echoed["output"] == str(tmp_path)

    reloaded = ExperimentConfig.model_validate(echoed)
    expected = load_config("preset:bias-1d", [f"output={json.dumps(str(tmp_path))}"])
    assert reloaded.model_dump() == expected.model_dump()


def test_minimal_run_writes_its_outputs(minimal_config, tmp_path):
    assert main(["run", str(minimal_config), "--workers", "1"]) == EXIT_OK
    output = tmp_path / "out"

    lines = (output / "run_regularized_diffusion-mu0.1-rep0.csv").read_text().splitlines()
    assert lines[0] == "iter,msd_network,msd_centroid,disagreement,test_error"
    assert len(lines) == 12
    assert lines[-1].startswith("10,")

    assert (output / "summary.csv").read_text().startswith("variant,mu,metric,mean,ci_half_width")
    echoed = json.loads((output / "resolved_config.json").read_text())
    assert echoed["algorithm"]["mu"] == 0.1


def test_override_is_reflected_in_the_echo(minimal_config, tmp_path):
    assert main(["run", str(minimal_config), "--workers", "1", "--override", "mu=0.01"]) == EXIT_OK
    output = tmp_path / "out"
    assert json.loads((output / "resolved_config.json").read_text())["algorithm"]["mu"] == 0.01
    assert (output / "run_regularized_diffusion-mu0.01-rep0.csv").is_file()


def test_seed_flag_sets_the_algorithm_seed(tmp_path):
    argv = ["preset", "bias-1d", "--dump", "--out", str(tmp_path), "--seed", "42"]
    assert main(argv) == EXIT_OK
    assert json.loads((tmp_path / "resolved_config.json").read_text())["algorithm"]["seed"] == 42


def test_verify_bias_on_the_one_dimensional_preset(tmp_path, capsys):
    argv = ["verify", "bias", "preset:bias-1d", "--workers", "1", "--override", f"output={json.dumps(str(tmp_path))}"]
    assert main(argv) == EXIT_OK
    assert "[PASS] bias <= bound at every delta" in capsys.readouterr().out
    assert (tmp_path / "bias_bound.csv").read_text().splitlines()[0] == "delta,bias,bound"


def test_example_config_validates():
    config = load_config(PROJECT_ROOT / "example" / "config.toml")
    assert config.algorithm.mu_values() == [0.02, 0.01]
    assert [group.count for group in config.agents] == [4, 2]


def _network_document(output, **algorithm) -> dict:
    return {
        "name": "ring-of-three",
        "output": str(output),
        "network": {"n_agents": 3, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 2, "seed": 5},
        "agents": [
            {
                "count": 3,
                "noise_sigma": 0.5,
                "risk": {"kind": "quadratic"},
                "regularizer": {"kind": "l1", "rho": 0.3},
            }
        ],
        "algorithm": {"mu": 0.05, "delta": 0.05, "iterations": 30, "repetitions": 3, **algorithm},
    }


def _write_document(path, document) -> str:
    path.write_text(json.dumps(document))
    return str(path)


def _outputs(directory) -> dict[str, bytes]:
    return {
        path.name: path.read_bytes()
        for path in sorted(directory.iterdir())
        if path.name != "resolved_config.json"
    }


def test_preset_aliases_resolve(tmp_path):
    assert load_config("preset:paper-fig3").name == "division-of-labor"
    assert load_config("preset:paper-fig3-full").name == "division-of-labor-full"
    assert main(["preset", "paper-fig3", "--dump", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "resolved_config.json").read_text())["name"] == "division-of-labor"


def test_outputs_do_not_depend_on_the_worker_count(tmp_path):
    serial = _write_document(tmp_path / "serial.json", _network_document(tmp_path / "serial"))
    pooled = _write_document(tmp_path / "pooled.json", _network_document(tmp_path / "pooled"))
    assert main(["run", serial, "--workers", "1"]) == EXIT_OK
    assert main(["run", pooled, "--workers", "2"]) == EXIT_OK

    outputs = _outputs(tmp_path / "serial")
    assert "run_regularized_diffusion-mu0.05-rep2.csv" in outputs
    assert outputs == _outputs(tmp_path / "pooled")


def test_rerun_from_the_echoed_config_reproduces_the_outputs(tmp_path):
    first = _write_document(tmp_path / "first.json", _network_document(tmp_path / "first"))
    assert main(["run", first, "--workers", "1"]) == EXIT_OK

    echoed = str(tmp_path / "first" / "resolved_config.json")
    override = f"output={json.dumps(str(tmp_path / 'second'))}"
    assert main(["run", echoed, "--workers", "1", "--override", override]) == EXIT_OK
    assert _outputs(tmp_path / "first") == _outputs(tmp_path / "second")


def test_run_writes_the_experiment_profile(tmp_path):
    path = _write_document(tmp_path / "ring.json", _network_document(tmp_path / "out", repetitions=1))
    assert main(["run", path, "--workers", "1"]) == EXIT_OK

    profile = json.loads((tmp_path / "out" / "experiment_profile.json").read_text())
    assert profile["n_agents"] == 3
    assert len(profile["edges"]) == 9
    assert [0, 1] in profile["edges"]
    assert profile["noise_sigmas"] == [0.5, 0.5, 0.5]
    assert sum(profile["perron"]) == pytest.approx(1.0)
    assert [sum(column) for column in zip(*profile["weights"])] == pytest.approx([1.0] * 3)


def test_drawn_noise_levels_are_recorded(tmp_path):
    document = _network_document(tmp_path / "out", repetitions=1)
    del document["agents"][0]["noise_sigma"]
    document["problem"]["noise_profile"] = [0.2, 0.4]
    profile = Experiment(validate(document)).profile()
    assert len(profile.noise_sigmas) == 3
    assert all(0.2 <= sigma <= 0.4 for sigma in profile.noise_sigmas)
    assert profile.roles == ["custom"] * 3


def test_graph_that_is_not_strongly_connected_is_a_configuration_error(tmp_path, capsys):
    document = _network_document(tmp_path / "out", repetitions=1)
    document["network"].update(topology="edges", edges=[[0, 1], [1, 2]], rule="uniform-averaging")
    with pytest.raises(ValidationFailure, match="network.edges"):
        Experiment(validate(document))

    path = _write_document(tmp_path / "broken.json", document)
    assert main(["run", path, "--workers", "1"]) == EXIT_CONFIG
    assert "network.edges" in capsys.readouterr().err


def test_missing_self_weights_name_the_self_loop_flag(tmp_path):
    document = _network_document(tmp_path / "out", repetitions=1)
    document["network"].update(self_loops=False, rule="uniform-averaging")
    with pytest.raises(ValidationFailure, match="network.self_loops"):
        Experiment(validate(document))


class _WatchingRepository(RecordRepository):
    def __init__(self):
        super().__init__()
        self.streamed: list[tuple[str, int]] = []

    def append_row(self, run_id: str, row: RecordRow):
        self.streamed.append((run_id, row.iter))
        super().append_row(run_id, row)


def test_serial_runs_stream_rows_into_the_repository(tmp_path):
    experiment = Experiment(validate(_network_document(tmp_path, iterations=4, repetitions=2)))
    jobs = [RunJob(variant="regularized_diffusion", mu=0.05, repetition=r) for r in range(2)]
    repository = _WatchingRepository()

    records = execute_all(experiment, jobs, repository, workers=1)

    assert repository.streamed == [(job.run_id, i) for job in jobs for i in range(5)]
    stored = repository.get_records()
    assert [record.run_id for record in stored] == [job.run_id for job in jobs]
    assert all(kept is record for kept, record in zip(stored, records))
    assert all(record.fingerprint and record.axis_value == 0.05 for record in stored)
    assert all(len(record.rows) == 5 for record in stored)


def test_logistic_run_reports_the_minimizer_test_error(tmp_path):
    document = {
        "name": "logistic",
        "output": str(tmp_path),
        "network": {"n_agents": 4, "topology": "ring", "rule": "metropolis"},
        "problem": {"dimension": 4, "informative": 2, "noise_profile": [0.5, 1.0]},
        "agents": [
            {
                "count": 4,
                "risk": {"kind": "logistic_l2", "rho2": 0.01},
                "regularizer": {"kind": "random_group_l1", "rho": 0.2, "count": 2},
            }
        ],
        "algorithm": {
            "variants": ["regularized_diffusion", "unregularized_diffusion", "non_cooperative"],
            "mu": 0.05,
            "delta": 0.05,
            "iterations": 5,
            "repetitions": 2,
        },
        "metrics": {"target": "nonsmooth", "test_size": 50, "write_runs": False},
    }
    with Manager(validate(document)) as manager:
        manager.run()

    with open(tmp_path / "summary.csv") as f:
        rows = list(csv.DictReader(f))
    [reference] = [row for row in rows if row["variant"] == "nonsmooth_minimizer"]
    assert reference["metric"] == "test_error"
    assert 0.0 <= float(reference["mean"]) <= 1.0
    assert reference["ci_half_width"] == "nan"

    [verdict] = manager.verdicts
    assert not verdict.informational
    assert "nonsmooth_minimizer" in verdict.detail
