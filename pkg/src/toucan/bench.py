"""Per-operation latency of the two TOUCAN primitives on one 64-bit Data field."""

from __future__ import annotations

import os
import platform
import random
import statistics
import time
from dataclasses import asdict, dataclass

from . import chaskey
from .block_cipher import Aes128Key, CtrContext, encrypt_data_field

CSV_FIELDS = ("algorithm", "input_bytes", "iterations", "mean_us", "median_us", "p99_us", "host")

# Published runtimes on an STM32F407 (Cortex-M4 @ 84 MHz). Context only, never a target.
BOARD_REFERENCE = (
    ("AES 128 bit - len 8 (byte)", 11.65),
    ("Chaskey", 11.90),
)
BOARD_LABEL = "published, STM32F407 @ 84 MHz"


@dataclass(frozen=True)
class BenchReport:
    algorithm: str
    input_bytes: int
    iterations: int
    mean_us: float
    median_us: float
    p99_us: float
    host: str

    def csv_row(self) -> str:
        return (f"{self.algorithm},{self.input_bytes},{self.iterations},"
                f"{self.mean_us:.4f},{self.median_us:.4f},{self.p99_us:.4f},{self.host}")

    def as_dict(self) -> dict:
        return asdict(self)


def pin_to_one_cpu() -> bool:
    """Restrict this process to a single CPU where the OS supports it."""
    if not hasattr(os, "sched_setaffinity"):
        return False
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, {cpus[0]})
    except OSError:
        return False
    return True


def host_descriptor(rounds: int = 8) -> str:
    res = time.get_clock_info("perf_counter").resolution
    jit = "jit" if chaskey.JIT_ENABLED else "nojit"
    # no commas: the descriptor is one CSV cell
    return (f"{platform.machine()} {platform.python_implementation()}-{platform.python_version()} "
            f"chaskey-{rounds} {jit} timer-res={res:.0e}s")


def _time_per_call(fn, args, iterations, warmup):
    for i in range(warmup):
        fn(*args[i % len(args)])
    samples = []
    clock = time.perf_counter_ns
    append = samples.append
    n = len(args)
    for i in range(iterations):
        a = args[i % n]
        t0 = clock()
        fn(*a)
        append(clock() - t0)
    return samples


def _report(name, nbytes, samples, host):
    samples_us = sorted(s / 1000.0 for s in samples)
    p99 = samples_us[min(len(samples_us) - 1, int(0.99 * len(samples_us)))]
    return BenchReport(name, nbytes, len(samples_us), statistics.fmean(samples_us),
                       statistics.median(samples_us), p99, host)


def run_bench(iterations: int = 100_000, rounds: int = 8, seed: int = 0, warmup: int = 2000) -> list[BenchReport]:
    """Time Chaskey MAC and AES-CTR encryption of an 8-byte field, one call per sample.

    Each sample includes one ``perf_counter_ns`` call pair (tens of ns).
    """
    if iterations < 1:
        raise ValueError("iterations must be positive")
    rng = random.Random(seed)
    host = host_descriptor(rounds)

    mac_key = chaskey.ChaskeyKey.from_bytes(rng.randbytes(16))
    messages = [(mac_key, rng.randbytes(8), rounds) for _ in range(256)]
    mac_samples = _time_per_call(chaskey.mac, messages, iterations, warmup)

    aes_key = Aes128Key(rng.randbytes(16))
    fields = [(aes_key, CtrContext.for_identifier(rng.randrange(0x800)), rng.getrandbits(64)) for _ in range(256)]
    aes_samples = _time_per_call(encrypt_data_field, fields, iterations, warmup)

    return [
        _report(f"Chaskey-{rounds}", 8, mac_samples, host),
        _report("AES-128-CTR", 8, aes_samples, host),
    ]


def format_table(reports) -> str:
    lines = [f"{'algorithm':<30} {'bytes':>5} {'iters':>8} {'mean us':>9} {'median us':>10} {'p99 us':>8}"]
    for r in reports:
        lines.append(f"{r.algorithm:<30} {r.input_bytes:>5} {r.iterations:>8} "
                     f"{r.mean_us:>9.3f} {r.median_us:>10.3f} {r.p99_us:>8.3f}")
    for name, us in BOARD_REFERENCE:
        lines.append(f"{name:<30} {8:>5} {'-':>8} {us:>9.2f} {'-':>10} {'-':>8}  [{BOARD_LABEL}]")
    lines.append(f"host: {reports[0].host}" if reports else "host: -")
    return "\n".join(lines)


def format_csv(reports) -> str:
    return ",".join(CSV_FIELDS) + "\n" + "".join(r.csv_row() + "\n" for r in reports)
