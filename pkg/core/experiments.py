"""
Ablation studies: train every arm of a study at equal steps, evaluate, compare.

Studies are declared in config/ExperimentConfig.json. Each arm applies
TrainConfig overrides on top of a shared base configuration.
"""

import dataclasses
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from config import settings
from core.data.synth import Corpus
from core.errors import ConfigError
from core.evaluation.evaluator import evaluate_model, flatten_metrics
from core.evaluation.report import ReportGenerator
from core.flow.sampler import SamplerConfig
from core.logging_config import MetricsLogger
from core.model.config import ModelConfig
from core.train.config import TrainConfig
from core.train.trainer import Trainer

logger = logging.getLogger(__name__)


def load_studies(path: str = settings.EXPERIMENT_CONFIG_PATH) -> Dict[str, Dict[str, Any]]:
    """Study id -> study declaration."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read experiment config '{path}': {e}") from e
    studies = {}
    for study in data.get('studies', []):
        if 'id' not in study or not study.get('arms'):
            raise ConfigError(f"study without id or arms in {path}")
        arm_ids = [arm['id'] for arm in study['arms']]
        if study.get('baseline') not in arm_ids:
            raise ConfigError(f"study '{study['id']}': baseline must name one of {arm_ids}")
        studies[study['id']] = study
    return studies


def directional_claims(study_id: str, verdicts: Dict[str, Dict[str, str]]) -> Dict[str, bool]:
    """Directional expectations of the built-in studies, evaluated on the verdicts."""
    if study_id == 'lambda':
        # the baseline weight recognizes better and the largest one must not beat it on reconstruction
        arm = verdicts.get('lambda_0.05', {})
        return {
            'lambda_0.005_lower_asr_ter': arm.get('asr_ter') == 'worse',
            'lambda_0.05_not_better_tts_mse': arm.get('tts_mse') in ('worse', 'equal'),
        }
    if study_id == 'mask':
        arm = verdicts.get('ar_mask', {})
        return {
            'full_mask_lower_tts_ter': arm.get('tts_ter') == 'worse',
            'full_mask_lower_tts_mse': arm.get('tts_mse') == 'worse',
        }
    return {}


class AblationRunner:
    """Runs one study end to end under `out_dir/<arm id>/`."""

    def __init__(self, study: Dict[str, Any], model_cfg: ModelConfig, base_cfg: TrainConfig,
                 corpus: Corpus, out_dir: str, eval_items: Optional[int] = None,
                 sampler: Optional[SamplerConfig] = None, progress: bool = False):
        self.study = study
        self.model_cfg = model_cfg
        self.base_cfg = base_cfg
        self.corpus = corpus
        self.out_dir = out_dir
        self.eval_examples = corpus.test[:eval_items or base_cfg.eval_items]
        self.sampler = sampler or SamplerConfig(nfe=base_cfg.eval_nfe, seed=base_cfg.seed)
        self.progress = progress

    def arm_config(self, arm: Dict[str, Any]) -> TrainConfig:
        try:
            return dataclasses.replace(self.base_cfg, **arm.get('overrides', {}))
        except TypeError as e:
            raise ConfigError(f"arm '{arm['id']}': {e}") from e

    def run_arm(self, arm: Dict[str, Any], resume: bool = False) -> Dict[str, float]:
        cfg = self.arm_config(arm)
        run_dir = os.path.join(self.out_dir, arm['id'])
        os.makedirs(run_dir, exist_ok=True)
        logger.info(f"Study {self.study['id']}: training arm {arm['id']} "
                    f"(task_mix={cfg.task_mix}, lambda={cfg.lambda_lm}, tts_mask={cfg.tts_mask})")
        trainer = Trainer(self.model_cfg, cfg, self.corpus, run_dir,
                          eval_examples=self.eval_examples, progress=self.progress)
        with MetricsLogger(os.path.join(run_dir, settings.METRICS_LOG_NAME)) as metrics:
            trainer.train_run(resume=resume, metrics=metrics)
        tasks = [t for t, on in (('asr', cfg.trains_asr), ('tts', cfg.trains_tts)) if on]
        report = evaluate_model(trainer.model, self.corpus.spec, self.eval_examples, self.sampler,
                                tasks=tasks, mask_mode=cfg.tts_mask, progress=self.progress)
        ReportGenerator.write_json(report, os.path.join(run_dir, 'eval_report.json'))
        return flatten_metrics(report)

    def run(self, resume: bool = False) -> Dict[str, Any]:
        started = datetime.now()
        arm_metrics: Dict[str, Dict[str, float]] = {}
        for arm in self.study['arms']:
            arm_metrics[arm['id']] = self.run_arm(arm, resume=resume)

        focus: List[str] = self.study.get('metric_focus', [])
        comparison = ReportGenerator.compare_arms(arm_metrics, self.study['baseline'], focus)
        comparison['study'] = self.study['id']
        comparison['claims'] = directional_claims(self.study['id'], comparison['verdicts'])
        comparison['duration'] = (datetime.now() - started).total_seconds()
        path = ReportGenerator.write_json(comparison, os.path.join(self.out_dir, 'ablation_report.json'))
        logger.info(f"Study {self.study['id']} finished; report at {path}")
        for claim, holds in comparison['claims'].items():
            log = logger.info if holds else logger.warning
            log(f"  {claim}: {'holds' if holds else 'does not hold'}")
        return comparison
