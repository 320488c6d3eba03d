"""
Results Processor for PDMP Lab runs
Turns trajectories, measures, rate sweeps and histograms into tables
and keeps track of the artifacts written by a run
"""

import logging
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils import ensure_dir, write_json
from .config import CSV_FLOAT_FORMAT, OUTPUT_FORMATS
from .metrics import RateFit
from .model import EmpiricalMeasure, ModelError
from .simulate import Trajectory

logger = logging.getLogger(__name__)


TRAJECTORY_COLUMNS = ['traj_id', 'n', 'tau']


def _coord_columns(dim: int) -> List[str]:
    return [f"y_{k}" for k in range(1, dim + 1)]


def _coord_index(column: str) -> Optional[int]:
    if column.startswith('y_') and column[2:].isdigit() and int(column[2:]) >= 1:
        return int(column[2:])
    return None


class ResultsProcessor:
    """Converts numerical results into pandas DataFrames and back"""

    @staticmethod
    def trajectories_frame(trajectories: Sequence[Trajectory]) -> pd.DataFrame:
        """
        One row per post-jump state

        Columns: traj_id, n, tau, y_1..y_d, mode, theta
        """
        frames = []
        for k, traj in enumerate(trajectories):
            steps = traj.n_steps + 1
            frame = pd.DataFrame({
                'traj_id': np.full(steps, k, dtype=int),
                'n': np.arange(steps, dtype=int),
                'tau': traj.tau,
            })
            coords = pd.DataFrame(traj.ys, columns=_coord_columns(traj.ys.shape[1]))
            tail = pd.DataFrame({'mode': traj.modes, 'theta': traj.thetas})
            frames.append(pd.concat([frame, coords, tail], axis=1))
        if not frames:
            return pd.DataFrame(columns=TRAJECTORY_COLUMNS + ['mode', 'theta'])
        return pd.concat(frames, ignore_index=True)

    @staticmethod
    def measure_frame(mu: EmpiricalMeasure) -> pd.DataFrame:
        """Columns: y_1..y_d, mode, weight"""
        coords = pd.DataFrame(mu.ys, columns=_coord_columns(mu.dim))
        tail = pd.DataFrame({'mode': mu.modes, 'weight': mu.weights})
        return pd.concat([coords, tail], axis=1)

    @staticmethod
    def measure_from_frame(frame: pd.DataFrame) -> EmpiricalMeasure:
        """Rebuild a normalized measure from a measure table (weights optional)"""
        coords = sorted((c for c in frame.columns if _coord_index(c) is not None), key=_coord_index)
        if 'mode' not in frame.columns or not coords:
            raise ModelError("a measure table needs a 'mode' column and y_1.. coordinate columns")
        if [_coord_index(c) for c in coords] != list(range(1, len(coords) + 1)):
            raise ModelError(f"coordinate columns must be y_1..y_d, got {', '.join(coords)}")
        if frame.empty:
            raise ModelError("measure table is empty")
        weights = frame['weight'].to_numpy(dtype=float) if 'weight' in frame.columns else None
        return EmpiricalMeasure.from_arrays(frame[coords].to_numpy(dtype=float),
                                            frame['mode'].to_numpy(dtype=int), weights)

    @staticmethod
    def read_measure(path: Union[str, Path]) -> EmpiricalMeasure:
        """Load a measure from a CSV or JSON records file"""
        path = Path(path)
        if not path.exists():
            raise ModelError(f"measure file not found: {path}")
        if path.suffix == '.json':
            frame = pd.read_json(path, orient='records')
        else:
            frame = pd.read_csv(path)
        logger.info(f"Loaded measure with {len(frame)} atoms from {path}")
        return ResultsProcessor.measure_from_frame(frame)

    @staticmethod
    def rate_frame(fit: RateFit) -> pd.DataFrame:
        """Columns: n, d_n, noise_floor"""
        return pd.DataFrame(list(fit.sweep), columns=['n', 'd_n', 'noise_floor'])

    @staticmethod
    def histogram_frame(rows: Iterable[Tuple[int, float, float, float]]) -> pd.DataFrame:
        """Columns: mode, bin_lo, bin_hi, mass"""
        return pd.DataFrame(list(rows), columns=['mode', 'bin_lo', 'bin_hi', 'mass'])


class RunArtifacts:
    """Writes the artifacts of one run into its output directory"""

    def __init__(self, out_dir: Union[str, Path], fmt: str = 'csv'):
        if fmt not in OUTPUT_FORMATS:
            raise ModelError(f"unknown output format '{fmt}'; expected one of {', '.join(OUTPUT_FORMATS)}")
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.files: List[Path] = []
        self.stats: Dict[str, int] = {'tables': 0, 'documents': 0, 'rows': 0}

    def save_table(self, name: str, frame: pd.DataFrame) -> Path:
        """Save a table as <name>.csv or <name>.json depending on the run format"""
        ensure_dir(self.out_dir)
        path = self.out_dir / f"{name}.{self.fmt}"
        if self.fmt == 'csv':
            frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        else:
            write_json(frame.to_dict(orient='records'), path)
        self.files.append(path)
        self.stats['tables'] += 1
        self.stats['rows'] += len(frame)
        logger.info(f"Saved {len(frame)} rows to {path}")
        return path

    def save_document(self, name: str, data: Union[Dict, List]) -> Path:
        path = write_json(data, self.out_dir / f"{name}.json")
        self.files.append(path)
        self.stats['documents'] += 1
        logger.info(f"Saved {path}")
        return path

    def get_stats(self) -> Dict[str, int]:
        return dict(self.stats)
