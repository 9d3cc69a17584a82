import pytest

from core.monitoring import StudyMonitor, collect_resources

# --- Unit Tests for StudyMonitor ---

def test_track_records_successes_and_failures():
    monitor = StudyMonitor()
    with monitor.track("scaling"):
        pass
    with pytest.raises(RuntimeError):
        with monitor.track("scaling"):
            raise RuntimeError("guard tripped")
    stats = monitor.get_summary_stats()
    assert stats["tasks"] == 2
    assert stats["failed"] == 1
    assert set(stats["seconds_by_task"]) == {"scaling"}
    assert monitor.tasks[1].error_message == "guard tripped"


def test_reset():
    monitor = StudyMonitor()
    monitor.record_task("verify", 0.5)
    monitor.reset()
    assert monitor.get_summary_stats()["tasks"] == 0


def test_collect_resources():
    snapshot = collect_resources()
    assert snapshot.cpu_count >= 1
    assert snapshot.memory_total_mb > 0
    assert snapshot.python.count(".") == 2
