import os

from chancexLib.initialize_loggers import resolve_log_dir, setup_loggers


def test_explicit_directory_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("CHANCEX_LOG_DIR", str(tmp_path / "env"))
    assert resolve_log_dir(str(tmp_path / "explicit")) == str(tmp_path / "explicit")


def test_environment_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("CHANCEX_LOG_DIR", str(tmp_path))
    assert resolve_log_dir() == str(tmp_path)


def test_switching_directories_moves_the_handlers(tmp_path):
    original = resolve_log_dir()
    try:
        _, info_logger = setup_loggers(str(tmp_path / "moved"))
        assert info_logger.handlers[0].baseFilename == os.path.join(tmp_path, "moved", "info.log")
        assert (tmp_path / "moved" / "errors.log").exists()
    finally:
        setup_loggers(original)
