"""
Seeded synthetic generator for benign and anomalous host-log runs.
Substitutes for private capture data so the full pipeline can be exercised.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from topolog.errors import DegenerateConfig
from topolog.log_model import SYSMON_IDS, EventType, Label, LogEvent, Run
from topolog.storage import DatasetManifest, DatasetStore

logger = logging.getLogger(__name__)

HOST_IP = "10.0.0.5"
SYSTEM_PID = "4"

IMAGE_POOL = (
    "C:\\Windows\\System32\\svchost.exe",
    "C:\\Windows\\System32\\cmd.exe",
    "C:\\Windows\\System32\\conhost.exe",
    "C:\\Windows\\System32\\WindowsPowerShell\\v1.0\\powershell.exe",
    "C:\\Windows\\System32\\rundll32.exe",
    "C:\\Windows\\System32\\taskhostw.exe",
    "C:\\Windows\\System32\\wbem\\WmiPrvSE.exe",
    "C:\\Windows\\System32\\dllhost.exe",
    "C:\\Windows\\System32\\SearchProtocolHost.exe",
    "C:\\Windows\\System32\\notepad.exe",
    "C:\\Windows\\System32\\reg.exe",
    "C:\\Windows\\System32\\schtasks.exe",
    "C:\\Windows\\System32\\msiexec.exe",
    "C:\\Windows\\System32\\certutil.exe",
    "C:\\Windows\\System32\\net.exe",
    "C:\\Windows\\System32\\whoami.exe",
    "C:\\Windows\\explorer.exe",
    "C:\\Program Files\\Mozilla Firefox\\firefox.exe",
    "C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe",
    "C:\\Program Files\\7-Zip\\7z.exe",
    "C:\\Program Files\\Microsoft Office\\root\\Office16\\WINWORD.EXE",
    "C:\\Program Files\\Microsoft Office\\root\\Office16\\EXCEL.EXE",
    "C:\\Users\\user\\Downloads\\setup.exe",
    "C:\\Users\\user\\AppData\\Local\\Temp\\update.exe",
)

COMMON_PORTS = ("443", "80", "53", "8080", "445")
SWEEP_PORTS = ("445", "139", "3389", "22")


class RunProfile(BaseModel):
    """Distribution parameters for one class of runs."""
    mean_processes: float = 6.0        # Poisson mean of spawned processes
    child_spawn_prob: float = 0.2      # P(new process is a child of the newest one)
    file_touch_rate: float = 1.5       # Poisson mean of FileCreate events per process
    network_fanout: float = 2.0        # Poisson mean of NetworkConnect events per process
    cycle_prob: float = 0.15           # P(an image, file or destination IP is reused)
    terminate_prob: float = 0.5        # P(a process terminates before the run ends)
    port_scan_prob: float = 0.0        # P(a connection targets a random low port)
    sweep_prob: float = 0.0            # P(the first process sweeps a subnet on one port)
    sweep_size: float = 0.0            # Poisson mean of hosts contacted by a sweep

    def check(self, name: str) -> None:
        """
        Validate rates and probabilities.

        Raises:
            DegenerateConfig: If a rate is negative or a probability is outside [0, 1]
        """
        for field in ("mean_processes", "file_touch_rate", "network_fanout", "sweep_size"):
            if getattr(self, field) < 0:
                raise DegenerateConfig(f"{name}.{field} must be non-negative")
        for field in ("child_spawn_prob", "cycle_prob", "terminate_prob", "port_scan_prob", "sweep_prob"):
            value = getattr(self, field)
            if not 0.0 <= value <= 1.0:
                raise DegenerateConfig(f"{name}.{field} must lie in [0, 1], got {value}")


def default_anomalous_profile() -> RunProfile:
    return RunProfile(
        mean_processes=9.0,
        child_spawn_prob=0.6,
        file_touch_rate=2.5,
        network_fanout=5.0,
        cycle_prob=0.45,
        terminate_prob=0.3,
        port_scan_prob=0.6,
        sweep_prob=1.0,
        sweep_size=60.0,
    )


class GenConfig(BaseModel):
    """Configuration of a synthetic dataset."""
    seed: int = 0
    n_runs: int = 200
    anomaly_fraction: float = 0.5
    run_duration: float = 180.0
    benign_profile: RunProfile = Field(default_factory=RunProfile)
    anomalous_profile: RunProfile = Field(default_factory=default_anomalous_profile)

    def n_anomalous(self) -> int:
        return int(round(self.n_runs * self.anomaly_fraction))

    def check(self) -> None:
        """
        Validate the configuration.

        Raises:
            DegenerateConfig: If the configuration cannot yield at least one
                run of each label or any rate parameter is invalid
        """
        if self.seed < 0:
            raise DegenerateConfig("seed must be an unsigned integer")
        if self.n_runs < 2:
            raise DegenerateConfig(f"n_runs must be at least 2, got {self.n_runs}")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise DegenerateConfig("anomaly_fraction must lie in [0, 1]")
        if not 1 <= self.n_anomalous() <= self.n_runs - 1:
            raise DegenerateConfig(
                f"anomaly_fraction {self.anomaly_fraction} with {self.n_runs} runs "
                "does not yield at least one run of each label"
            )
        if self.run_duration <= 0:
            raise DegenerateConfig("run_duration must be positive")
        self.benign_profile.check("benign_profile")
        self.anomalous_profile.check("anomalous_profile")


def _random_ip(rng: np.random.Generator) -> str:
    octets = rng.integers(1, 255, size=4)
    return f"{int(rng.integers(1, 224))}.{octets[1]}.{octets[2]}.{octets[3]}"


def _pick(rng: np.random.Generator, values):
    return values[int(rng.integers(len(values)))]


def _sweep(rng: np.random.Generator, mean_hosts: float) -> tuple[str, list[str]]:
    """One port and distinct hosts of a random /24 subnet."""
    port = _pick(rng, SWEEP_PORTS)
    subnet = int(rng.integers(1, 255))
    n_hosts = min(int(rng.poisson(mean_hosts)), 254)
    hosts = rng.choice(np.arange(1, 255), size=n_hosts, replace=False)
    return port, [f"10.0.{subnet}.{int(h)}" for h in hosts]


def generate_run(
    run_id: str,
    label: Label,
    profile: RunProfile,
    duration: float,
    seed_seq: np.random.SeedSequence,
) -> Run:
    """
    Generate a single run from a profile.

    The run is a process tree rooted at the system process. Each process may
    touch files, open network connections from the host address, and
    terminate. Reused images, files and destination addresses close cycles
    in the resulting complex. A sweep has the first process contact many
    fresh hosts on one port; every host after the first closes a 4-cycle
    through that port.

    Args:
        run_id: Identifier of the run
        label: Label recorded on the run
        profile: Distribution parameters
        duration: Upper bound for every timestamp (seconds)
        seed_seq: Per-run seed sequence

    Returns:
        Run with events sorted by timestamp
    """
    rng = np.random.default_rng(seed_seq)

    def stamp(t: float) -> float:
        return min(round(float(t), 3), duration)

    pending: list[LogEvent] = []

    def emit(t: float, event_type: EventType, **attributes: str) -> float:
        t = stamp(t)
        attributes["sysmon_id"] = SYSMON_IDS[event_type]
        pending.append(LogEvent(t, event_type, attributes))
        return t

    n_processes = 1 + int(rng.poisson(profile.mean_processes))
    create_times = np.sort(rng.uniform(0.0, duration, size=n_processes))
    base_pid = int(rng.integers(1000, 9000))
    pids = [str(base_pid + 4 * i) for i in range(n_processes)]

    images: dict[str, str] = {}
    files_used: list[str] = []
    dst_ips_used: list[str] = []

    for i, pid in enumerate(pids):
        if i == 0:
            parent = SYSTEM_PID
        elif rng.random() < profile.child_spawn_prob:
            parent = pids[i - 1]
        else:
            parent = pids[int(rng.integers(0, i))]

        # Never the parent's image
        reusable = [img for img in images.values() if img != images.get(parent)]
        if reusable and rng.random() < profile.cycle_prob:
            image = _pick(rng, reusable)
        else:
            image = _pick(rng, IMAGE_POOL)
        images[pid] = image

        born = emit(
            create_times[i],
            EventType.PROCESS_CREATE,
            process_id=pid,
            parent_process_id=parent,
            image=image,
            command_line=f"\"{image}\" /run {i}",
        )
        last_seen = born

        for _ in range(int(rng.poisson(profile.file_touch_rate))):
            if files_used and rng.random() < profile.cycle_prob:
                target = _pick(rng, files_used)
            else:
                target = f"C:\\Users\\user\\AppData\\Local\\Temp\\{int(rng.integers(0, 2**32)):08x}.tmp"
                files_used.append(target)
            t = emit(rng.uniform(born, duration), EventType.FILE_CREATE,
                     process_id=pid, target_file=target)
            last_seen = max(last_seen, t)

        for _ in range(int(rng.poisson(profile.network_fanout))):
            if dst_ips_used and rng.random() < profile.cycle_prob:
                dst_ip = _pick(rng, dst_ips_used)
            else:
                dst_ip = _random_ip(rng)
                dst_ips_used.append(dst_ip)
            if rng.random() < profile.port_scan_prob:
                dst_port = str(int(rng.integers(1, 1025)))
            else:
                dst_port = _pick(rng, COMMON_PORTS)
            t = emit(
                rng.uniform(born, duration),
                EventType.NETWORK_CONNECT,
                process_id=pid,
                src_ip=HOST_IP,
                src_port=str(int(rng.integers(49152, 65536))),
                dst_ip=dst_ip,
                dst_port=dst_port,
            )
            last_seen = max(last_seen, t)

        if i == 0 and rng.random() < profile.sweep_prob:
            sweep_port, targets = _sweep(rng, profile.sweep_size)
            for dst_ip in targets:
                t = emit(
                    rng.uniform(born, duration),
                    EventType.NETWORK_CONNECT,
                    process_id=pid,
                    src_ip=HOST_IP,
                    src_port=str(int(rng.integers(49152, 65536))),
                    dst_ip=dst_ip,
                    dst_port=sweep_port,
                )
                dst_ips_used.append(dst_ip)
                last_seen = max(last_seen, t)

        if rng.random() < profile.terminate_prob:
            emit(rng.uniform(last_seen, duration), EventType.PROCESS_TERMINATE, process_id=pid)

    # Stable sort keeps emission order for equal timestamps
    events = sorted(pending, key=lambda e: e.timestamp)
    return Run(run_id, label, tuple(events))


def generate(config: GenConfig, n_jobs: int = 1) -> list[Run]:
    """
    Generate a labelled synthetic dataset.

    Every run draws from its own PCG64 stream seeded by (seed, run index), so
    serial and parallel generation produce identical runs.

    Args:
        config: Generator configuration
        n_jobs: Worker count for joblib (1 runs serially)

    Returns:
        Runs ordered by run_id

    Raises:
        DegenerateConfig: If the configuration is invalid

    Example:
        >>> runs = generate(GenConfig(seed=7, n_runs=4, anomaly_fraction=0.5))
        >>> sorted(r.label.value for r in runs)
        ['anomalous', 'anomalous', 'benign', 'benign']
    """
    config.check()

    order = np.random.default_rng(config.seed).permutation(config.n_runs)
    anomalous = set(int(i) for i in order[:config.n_anomalous()])

    width = max(4, len(str(config.n_runs - 1)))
    jobs = []
    for index in range(config.n_runs):
        label = Label.ANOMALOUS if index in anomalous else Label.BENIGN
        profile = config.anomalous_profile if label is Label.ANOMALOUS else config.benign_profile
        jobs.append(delayed(generate_run)(
            f"run-{index:0{width}d}",
            label,
            profile,
            config.run_duration,
            np.random.SeedSequence([config.seed, index]),
        ))

    runs = Parallel(n_jobs=n_jobs)(jobs)
    logger.info(
        "Generated %d runs (%d anomalous) with seed %d",
        len(runs), len(anomalous), config.seed,
    )
    return list(runs)


def write_dataset(config: GenConfig, out_dir: Union[str, Path], n_jobs: int = 1) -> DatasetManifest:
    """
    Generate a dataset and write it as JSONL files plus manifest.json.

    Args:
        config: Generator configuration
        out_dir: Destination directory
        n_jobs: Worker count for generation

    Returns:
        The written manifest
    """
    runs = generate(config, n_jobs=n_jobs)
    store = DatasetStore(out_dir)
    return store.save_dataset(runs, config=config.model_dump(mode="json"))
