"""
Evaluation reports, metric curves and ablation comparisons.
"""

import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import pandas as pd

from core.logging_config import parse_metrics_log

logger = logging.getLogger(__name__)

# Metrics where a larger value is better; everything else is minimized.
HIGHER_IS_BETTER = {"asr_accuracy", "tts_similarity"}


class ReportGenerator:
    """Writes JSON reports and CSV curves for evaluation and ablation runs."""

    @staticmethod
    def write_json(report: Dict[str, Any], save_path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(save_path)), exist_ok=True)
        with open(save_path, 'w', encoding='utf-8') as f:
            json.dump(report, f, indent=2, sort_keys=True, ensure_ascii=False)
        return save_path

    @staticmethod
    def generate_eval_report(metrics: Dict[str, Any], save_path: str,
                             context: Optional[Dict[str, Any]] = None) -> str:
        """
        Write an evaluation report.

        Args:
            metrics: Per-task split summaries from the evaluator
            save_path: Output JSON path
            context: Checkpoint, corpus and sampler details echoed into the report

        Returns:
            Path of the written report
        """
        report = {
            'context': context or {},
            'metrics': metrics,
            'notes': ReportGenerator._generate_notes(metrics),
        }
        return ReportGenerator.write_json(report, save_path)

    @staticmethod
    def _generate_notes(metrics: Dict[str, Any]) -> List[str]:
        notes = []
        tts = metrics.get('tts', {})
        seen = tts.get('seen', {}).get('similarity')
        unseen = tts.get('unseen', {}).get('similarity')
        if seen is not None and unseen is not None and seen - unseen > 0.1:
            notes.append(f"Unseen-speaker similarity trails seen speakers by {seen - unseen:.3f}.")
        asr = metrics.get('asr', {}).get('all', {})
        if asr.get('truncated'):
            notes.append(f"{asr['truncated']} transcripts hit the decode length limit.")
        return notes

    @staticmethod
    def export_curves(metrics_log: str, csv_path: str) -> pd.DataFrame:
        """Training and eval records of a metrics log as one CSV table, ordered by step."""
        records = parse_metrics_log(metrics_log)
        frame = pd.DataFrame(records)
        if not frame.empty and 'step' in frame:
            frame = frame.sort_values(['step', 'event'], kind='stable').reset_index(drop=True)
        frame.to_csv(csv_path, index=False)
        logger.info(f"Curves written to {csv_path} ({len(frame)} rows)")
        return frame

    @staticmethod
    def plot_curves(frame: pd.DataFrame, save_path: str, columns: Optional[List[str]] = None) -> Optional[str]:
        """Line plot of the training loss columns against step."""
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt

        train = frame[frame['event'] == 'train'] if 'event' in frame else frame
        columns = [c for c in (columns or ['loss', 'asr_loss', 'tts_loss']) if c in train]
        if train.empty or not columns:
            return None
        fig, ax = plt.subplots(figsize=(8, 5))
        for col in columns:
            ax.plot(train['step'], train[col], label=col)
        ax.set_xlabel('step')
        ax.set_yscale('log')
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(save_path)
        plt.close(fig)
        return save_path

    @staticmethod
    def compare_arms(arm_metrics: Dict[str, Dict[str, float]], baseline: str,
                     metric_focus: List[str]) -> Dict[str, Any]:
        """
        Compare every arm against the baseline on the focus metrics.

        Returns:
            {'table': [...], 'verdicts': {arm: {metric: 'better'|'worse'|'equal'|'missing'}}}
        """
        table = [{'arm': arm, **values} for arm, values in arm_metrics.items()]
        base = arm_metrics.get(baseline, {})
        verdicts: Dict[str, Dict[str, str]] = {}
        for arm, values in arm_metrics.items():
            if arm == baseline:
                continue
            verdicts[arm] = {}
            for metric in metric_focus:
                if metric not in values or metric not in base:
                    verdicts[arm][metric] = 'missing'
                    continue
                delta = values[metric] - base[metric]
                if metric in HIGHER_IS_BETTER:
                    delta = -delta
                verdicts[arm][metric] = 'equal' if delta == 0 else ('better' if delta < 0 else 'worse')
        return {
            'timestamp': datetime.now().isoformat(),
            'baseline': baseline,
            'metric_focus': metric_focus,
            'table': table,
            'verdicts': verdicts,
        }
