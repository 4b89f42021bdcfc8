"""
性能指标收集模块
用于记录流水线各阶段的耗时，耗时是报告中唯一不可复现的部分
"""
import threading
import time
from contextlib import contextmanager
from typing import Dict

from src.logger import get_logger


class PerformanceMetrics:
    """
    阶段耗时收集类

    职责：
    1. 记录各阶段的耗时
    2. 统计求解器调用次数
    3. 生成写入报告 timing 节的字典

    线程安全：使用Lock保护所有共享数据
    """

    def __init__(self):
        self._phases: Dict[str, Dict[str, float]] = {}
        self._counters: Dict[str, int] = {}
        self._lock = threading.Lock()
        self._start_time = None
        self._end_time = None
        self.logger = get_logger("performance_metrics")

    def start_phase(self, phase_name: str):
        """开始一个阶段"""
        with self._lock:
            self._phases.setdefault(phase_name, {})['start'] = time.perf_counter()
            if self._start_time is None:
                self._start_time = self._phases[phase_name]['start']
            self.logger.debug(f"阶段开始: {phase_name}")

    def end_phase(self, phase_name: str):
        """结束一个阶段"""
        with self._lock:
            phase = self._phases.get(phase_name)
            if not phase or 'start' not in phase:
                self.logger.warning(f"阶段{phase_name}未开始，无法结束")
                return
            phase['end'] = time.perf_counter()
            phase['duration'] = phase.get('duration', 0.0) + phase['end'] - phase['start']
            self._end_time = phase['end']
        self.logger.log_phase(phase_name, phase['duration'])

    @contextmanager
    def phase(self, phase_name: str):
        """with 语句形式的阶段计时，异常时也记录耗时"""
        self.start_phase(phase_name)
        try:
            yield
        finally:
            self.end_phase(phase_name)

    def increment(self, counter: str, amount: int = 1):
        with self._lock:
            self._counters[counter] = self._counters.get(counter, 0) + amount

    def get_total_duration(self) -> float:
        with self._lock:
            if self._start_time is None or self._end_time is None:
                return 0.0
            return self._end_time - self._start_time

    def generate_report(self) -> Dict[str, float]:
        """报告 timing 节：各阶段秒数与总耗时"""
        with self._lock:
            report = {f"{name}_seconds": data['duration']
                      for name, data in self._phases.items() if 'duration' in data}
        report['total_seconds'] = self.get_total_duration()
        return report

    def counters(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def get_summary_text(self) -> str:
        """控制台摘要"""
        report = self.generate_report()
        lines = ["=" * 60, "性能摘要", "=" * 60]
        for name, seconds in report.items():
            lines.append(f"{name}: {seconds:.2f}秒")
        for name, count in self.counters().items():
            lines.append(f"{name}: {count}")
        lines.append("=" * 60)
        return "\n".join(lines)
