import pytest

from schoolpulse.config import FederationParams, PlatformConfig
from schoolpulse.platform import Platform
from schoolpulse.privacy import IngestFormat
from schoolpulse.synthetic import SyntheticDatasetSpec, generate_school_csv

SMALL_SPEC = SyntheticDatasetSpec(schools=2, students_per_school=40, seed=3)


def build_platform(data_dir, spec=SMALL_SPEC, federation=None) -> Platform:
    cfg = PlatformConfig(
        data_dir=data_dir,
        pseudonym_key_hex="22" * 32,
        federation=federation or FederationParams(rounds=8, epochs=10, seed=3),
    )
    platform = Platform(cfg)
    for i in range(spec.schools):
        result = platform.ingest(generate_school_csv(spec, i), f"sch-{i}", IngestFormat.CSV)
        assert not result["rejects"]
    # one student with no elective history, for the cold-start path
    extra = ",".join(["NEWCOMER1", "cohort", "", "2023"] + [""] * 13)
    from schoolpulse.privacy import CSV_HEADER

    platform.ingest(
        (",".join(CSV_HEADER) + "\n" + extra + "\n").encode(), "sch-0", IngestFormat.CSV
    )
    return platform


@pytest.fixture(scope="session")
def trained_platform(tmp_path_factory):
    """Small ingested+trained platform shared by service/platform tests."""
    platform = build_platform(tmp_path_factory.mktemp("platform-data"))
    platform.train("inschool")
    platform.train("exam")
    platform.train("behavior")
    platform.run_federation_sim()
    return platform
