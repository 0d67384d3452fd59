"""Edge-node runtime: resource accounting, battery model, sensors, and
execution of placed pipeline-stage instances against their input queues.

Stages are synthetic compute kernels declared by per-item cost, memory
footprint, and output size; they stand in for the resource signature of
real inference workloads.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

IDLE_DRAIN_J_PER_S = 0.1
ACTIVE_DRAIN_J_PER_CPU_UNIT_S = 1.0
QUEUE_HIGH_WATERMARK = 100


class NodeDown(Exception):
    pass


class RejectReason(str, Enum):
    INSUFFICIENT_CPU = "insufficient_cpu"
    INSUFFICIENT_MEM = "insufficient_mem"


@dataclass(frozen=True)
class StageSpec:
    name: str
    cpu_demand: float  # work-units/second reserved
    mem_demand: float  # MB
    per_item_cost: float  # work-units per item
    input_topic: str
    output_topic: str
    output_size: int  # bytes per output item

    def __post_init__(self):
        if self.cpu_demand <= 0 or self.mem_demand < 0 or self.per_item_cost <= 0:
            raise ValueError(f"stage {self.name}: demands and per-item cost must be positive")

    @property
    def service_rate(self) -> float:
        """Items per second at full reserved share."""
        return self.cpu_demand / self.per_item_cost


@dataclass(frozen=True)
class NodeSpec:
    id: str
    cpu_capacity: float
    memory_capacity: float
    battery_capacity: float
    location: tuple[float, float] = (0.0, 0.0)
    sensor_config: tuple[str, ...] = ("battery", "location", "network", "threat")

    def __post_init__(self):
        if self.cpu_capacity <= 0 or self.memory_capacity <= 0 or self.battery_capacity <= 0:
            raise ValueError(f"node {self.id}: capacities must be positive")


@dataclass
class Item:
    """One unit of work flowing through a pipeline, tracked end to end."""

    item_id: str
    src_created_at: int
    size: int


@dataclass
class SensorReading:
    sensor_id: str
    at: int
    value: object


@dataclass
class StageInstance:
    instance_id: str
    stage: StageSpec
    queue: deque = field(default_factory=deque)
    credit: float = 0.0
    consumed: int = 0
    enqueued: int = 0
    # hash-slot filter for replicated instances; None = accept everything
    slot: tuple[int, int] | None = None


class Node:
    def __init__(self, spec: NodeSpec,
                 idle_drain: float = IDLE_DRAIN_J_PER_S,
                 active_drain: float = ACTIVE_DRAIN_J_PER_CPU_UNIT_S):
        self.spec = spec
        self.up = True
        self.battery_j = spec.battery_capacity
        self.reserved_cpu = 0.0
        self.reserved_mem = 0.0
        self.instances: list[StageInstance] = []
        self.idle_drain = idle_drain
        self.active_drain = active_drain
        self.waypoints: list[tuple[int, tuple[float, float]]] = [(0, spec.location)]
        self.threat = False
        self.bw_readings: dict[str, float] = {}  # peer node id -> last bps estimate

    @property
    def cpu_free(self) -> float:
        return self.spec.cpu_capacity - self.reserved_cpu

    @property
    def mem_free(self) -> float:
        return self.spec.memory_capacity - self.reserved_mem

    # --- stage lifecycle ---

    def admit_stage(self, stage: StageSpec, instance_id: str) -> tuple[StageInstance | None, RejectReason | None]:
        if not self.up:
            raise NodeDown(self.spec.id)
        if stage.cpu_demand > self.cpu_free + 1e-9:
            return None, RejectReason.INSUFFICIENT_CPU
        if stage.mem_demand > self.mem_free + 1e-9:
            return None, RejectReason.INSUFFICIENT_MEM
        self.reserved_cpu += stage.cpu_demand
        self.reserved_mem += stage.mem_demand
        inst = StageInstance(instance_id=instance_id, stage=stage)
        self.instances.append(inst)
        return inst, None

    def can_admit(self, stage: StageSpec) -> bool:
        return (self.up and stage.cpu_demand <= self.cpu_free + 1e-9
                and stage.mem_demand <= self.mem_free + 1e-9)

    def remove_stage(self, instance_id: str) -> StageInstance | None:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                self.instances.remove(inst)
                self.reserved_cpu -= inst.stage.cpu_demand
                self.reserved_mem -= inst.stage.mem_demand
                return inst
        return None

    def enqueue(self, inst: StageInstance, item: Item) -> bool:
        """Returns True when the enqueue crosses the high-watermark depth."""
        inst.queue.append(item)
        inst.enqueued += 1
        return len(inst.queue) == QUEUE_HIGH_WATERMARK

    # --- execution ---

    def step_execute(self, dt_ms: int, now_ms: int) -> tuple[list[tuple[StageInstance, Item]], bool]:
        """Advance every stage instance by dt. Returns (outputs, went_down).

        Each instance accrues service credit at (cpu share / per-item cost)
        items/s and processes whole items while credit and queue allow.
        Idle drain is charged for the full step up front; items then drain
        energy one at a time until the battery empties, at which point the
        node goes down (outputs produced up to the exhaustion instant).
        """
        if not self.up:
            return [], False
        if dt_ms <= 0:
            raise ValueError("dt_ms must be positive")
        dt_s = dt_ms / 1000.0
        outputs: list[tuple[StageInstance, Item]] = []
        self.battery_j -= self.idle_drain * dt_s
        exhausted = self.battery_j <= 0
        if not exhausted:
            for inst in self.instances:
                inst.credit += inst.stage.service_rate * dt_s
                per_item_j = self.active_drain * inst.stage.per_item_cost
                while inst.queue and inst.credit >= 1.0:
                    if self.battery_j < per_item_j:
                        exhausted = True
                        break
                    item = inst.queue.popleft()
                    inst.credit -= 1.0
                    inst.consumed += 1
                    self.battery_j -= per_item_j
                    outputs.append((inst, Item(
                        item_id=item.item_id,
                        src_created_at=item.src_created_at,
                        size=inst.stage.output_size,
                    )))
                if exhausted:
                    break
        if exhausted:
            self.battery_j = max(self.battery_j, 0.0)
            self.up = False
            return outputs, True
        return outputs, False

    def fail(self):
        self.up = False

    def restore(self):
        if self.battery_j > 0:
            self.up = True

    # --- sensors ---

    def location_at(self, at_ms: int) -> tuple[float, float]:
        wp = self.waypoints
        if at_ms <= wp[0][0]:
            return wp[0][1]
        for (t0, p0), (t1, p1) in zip(wp, wp[1:]):
            if t0 <= at_ms <= t1:
                f = (at_ms - t0) / (t1 - t0)
                return (p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1]))
        return wp[-1][1]

    def read_sensors(self, at_ms: int) -> list[SensorReading]:
        if not self.up:
            raise NodeDown(self.spec.id)
        readings = []
        cfg = self.spec.sensor_config
        if "battery" in cfg:
            pct = 100.0 * self.battery_j / self.spec.battery_capacity
            readings.append(SensorReading("battery", at_ms, pct))
        if "location" in cfg:
            readings.append(SensorReading("location", at_ms, self.location_at(at_ms)))
        if "network" in cfg:
            for peer in sorted(self.bw_readings):
                readings.append(SensorReading(f"network:{peer}", at_ms, self.bw_readings[peer]))
        if "threat" in cfg:
            readings.append(SensorReading("threat", at_ms, self.threat))
        return readings
