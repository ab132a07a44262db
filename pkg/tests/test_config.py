import pytest

from uwbloc.config import ScenarioConfig, load_config, parse_point
from uwbloc.errors import ConfigurationError, NotProvisionedError, RankDeficiencyError
from uwbloc.geometry import Point3

from conftest import ROOT, ROOM


def _ini(tmp_path, body):
    path = tmp_path / "s.ini"
    path.write_text(body)
    return path


def test_default_scenario_file():
    config = load_config(ROOT / "scenarios" / "default.ini")
    table, schedule, scenario = config.resolve(need_fix=True)
    assert dict(table.entries) == ROOM
    assert schedule.anchors == (0x02, 0x03, 0x04, 0x05, 0x06)
    assert schedule.round_trip_ms == 250
    assert config.seed == 2024 and config.tag == Point3(4, 5, 1)
    assert config.channel.noise_sigma == 0.05 and config.channel.loss_prob == 0.01
    assert len(config.grid.points()) == 35
    assert config.ekf_params().dt == pytest.approx(0.05)


def test_nlos_and_clock_sections(tmp_path, room_file):
    path = _ini(
        tmp_path,
        f"[scenario]\nanchor_file = {room_file.name}\n"
        "[channel]\nnlos_bias = 0.4\nnlos_anchors = 0x04 0x05\n"
        "[clock]\ntag_drift_ppm = 10\ncoarse = yes\n"
        "[ekf]\nmode = batch\nq_accel = 0.2\n",
    )
    config = load_config(path)
    table, _, scenario = config.resolve()
    assert set(scenario.channels) == {0x04, 0x05}
    assert scenario.channel(0x04).nlos and not scenario.channel(0x02).nlos
    assert scenario.tag_clock.drift_ppm == 10 and scenario.tag_clock.quantum_ps == 15.65
    assert config.batch and config.ekf_params().q_accel == 0.2


@pytest.mark.parametrize(
    "body",
    [
        "[scenario]\nslot_ms = abc\n",
        "[channel]\nnoise_sigma = -1\n",
        "[ekf]\nmode = fancy\n",
        "[ekf]\nr_range = 0\n",
        "[grid]\nerror = 4d\n",
        "[scenario]\nseed = -1\n",
        "not an ini",
    ],
)
def test_bad_values(tmp_path, body):
    with pytest.raises(ConfigurationError):
        load_config(_ini(tmp_path, body))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.ini")


def test_resolve_checks_before_running(tmp_path, room_file):
    with pytest.raises(NotProvisionedError):
        ScenarioConfig(anchor_file=tmp_path / "absent.txt").resolve()
    with pytest.raises(ConfigurationError, match="0x09"):
        ScenarioConfig(anchor_file=room_file, nlos_anchors=(0x09,)).resolve()
    with pytest.raises(RankDeficiencyError):
        ScenarioConfig(anchor_file=room_file, anchor_order=(0x02, 0x03, 0x04)).resolve(need_fix=True)


def test_parse_point():
    assert parse_point("4,5,1") == Point3(4, 5, 1)
    assert parse_point(" 4 5 1 ") == Point3(4, 5, 1)
    with pytest.raises(ConfigurationError):
        parse_point("4,5")
    with pytest.raises(ConfigurationError):
        parse_point("4,5,x")
