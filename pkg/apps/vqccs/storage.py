"""
On-disk formats: datasets (.npz), manifests, checkpoints (JSON) and CSV
exports. Every write goes to a temporary file in the destination directory
and is moved into place with ``os.replace``.
"""
import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import DatasetMissingError, ShapeMismatchError
from .system_model import InstanceBatch
from .training import Checkpoint
from .vqc_denoiser import build_qubit_circuit

logger = logging.getLogger(__name__)

DATASET_FORMAT = 1
COMPLEX_ARRAYS = ('pilot', 'channel', 'signal', 'observation')
DATASET_ARRAYS = COMPLEX_ARRAYS + ('activity', 'noise_var')


@contextmanager
def atomic_write(path, mode='w'):
    """Yield a handle on a temporary sibling of ``path``; replace ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode=mode,
        dir=path.parent,
        prefix=f'.{path.name}.',
        suffix='.tmp',
        delete=False,
        **({'encoding': 'utf-8', 'newline': ''} if 'b' not in mode else {}),
    )
    try:
        with handle:
            yield handle
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def content_hash(path):
    """SHA-256 over the array payloads of an .npz, independent of zip timestamps."""
    path = Path(path)
    if path.suffix != '.npz':
        return file_hash(path)
    digest = hashlib.sha256()
    with np.load(path, allow_pickle=False) as container:
        for name in sorted(container.files):
            array = container[name]
            digest.update(name.encode('utf-8'))
            digest.update(str(array.dtype).encode('utf-8'))
            digest.update(repr(array.shape).encode('utf-8'))
            digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()


def _interleave(array):
    return np.stack([array.real, array.imag], axis=-1).astype(np.float64)


def _join(array):
    return array[..., 0] + 1j * array[..., 1]


# Datasets -------------------------------------------------------------------

def save_dataset(path, batch, header=None):
    """Write ``batch`` as an .npz container; complex arrays as trailing (re, im) pairs."""
    meta = {
        'format': DATASET_FORMAT,
        'version': __version__,
        **batch.meta,
        **(header or {}),
    }
    arrays = {name: _interleave(getattr(batch, name)) for name in COMPLEX_ARRAYS}
    arrays['activity'] = np.asarray(batch.activity, dtype=np.int8)
    arrays['noise_var'] = np.asarray(batch.noise_var, dtype=np.float64)
    buffer = io.BytesIO()
    np.savez(buffer, meta=np.array(json.dumps(meta, sort_keys=True, default=str)), **arrays)
    with atomic_write(path, 'wb') as handle:
        handle.write(buffer.getvalue())
    logger.info('Wrote %d instances to %s.', len(batch), path)


def load_dataset(path):
    path = Path(path)
    if not path.exists():
        raise DatasetMissingError(f'Dataset {path} does not exist; run gen_data first.')
    with np.load(path, allow_pickle=False) as container:
        missing = [name for name in DATASET_ARRAYS + ('meta',) if name not in container]
        if missing:
            raise ShapeMismatchError(f'Dataset {path} lacks arrays {missing}.',
                                     expected=list(DATASET_ARRAYS), found=list(container.keys()))
        meta = json.loads(str(container['meta']))
        if meta.get('format') != DATASET_FORMAT:
            raise ShapeMismatchError(f'Unsupported dataset format {meta.get("format")}.',
                                     expected=DATASET_FORMAT, found=meta.get('format'))
        values = {name: _join(container[name]) for name in COMPLEX_ARRAYS}
        values['activity'] = container['activity'].astype(np.int8)
        values['noise_var'] = container['noise_var'].astype(np.float64)
    batch = InstanceBatch(meta=meta, **values)
    b, m, n = batch.pilot.shape
    if batch.signal.shape != (b, n) or batch.observation.shape != (b, m):
        raise ShapeMismatchError(
            f'Inconsistent dataset shapes in {path}.',
            expected={'signal': (b, n), 'observation': (b, m)},
            found={'signal': batch.signal.shape, 'observation': batch.observation.shape},
        )
    return batch


def export_dataset_csv(path, batch, header=None):
    """Per-device debug export; observation columns stay blank past index M-1."""
    columns = ['instance', 'index', 'activity', 'channel_re', 'channel_im',
               'signal_re', 'signal_im', 'observation_re', 'observation_im', 'noise_var']
    rows = []
    for k in range(len(batch)):
        for i in range(batch.n_devices):
            observation = ('', '')
            if i < batch.n_measurements:
                observation = (batch.observation[k, i].real, batch.observation[k, i].imag)
            rows.append([
                k, i, int(batch.activity[k, i]),
                batch.channel[k, i].real, batch.channel[k, i].imag,
                batch.signal[k, i].real, batch.signal[k, i].imag,
                *observation, batch.noise_var[k],
            ])
    write_csv(path, columns, rows, header)


# CSV ------------------------------------------------------------------------

def write_csv(path, columns, rows, header=None):
    """Comma separated with a header row, preceded by ``# key=value`` lines."""
    with atomic_write(path) as handle:
        for key, value in (header or {}).items():
            handle.write(f'# {key}={value}\n')
        writer = csv.writer(handle)
        writer.writerow(columns)
        writer.writerows(rows)


def read_csv(path):
    """Return ``(header, columns, rows)`` of a file written by ``write_csv``."""
    header, lines = {}, []
    with open(path, encoding='utf-8', newline='') as handle:
        for line in handle:
            if line.startswith('# '):
                key, _, value = line[2:].rstrip('\n').partition('=')
                header[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    return header, columns, list(reader)


# Manifest -------------------------------------------------------------------

def write_manifest(directory, config, files, counts):
    directory = Path(directory)
    manifest = {
        'version': __version__,
        'config_hash': config.config_hash(),
        'config': config.to_dict(),
        'seed': config.scenario.seed,
        'counts': counts,
        'files': {
            Path(f).name: {'sha256': file_hash(f), 'content_hash': content_hash(f)} for f in files
        },
    }
    combined = hashlib.sha256(
        ''.join(entry['content_hash'] for _, entry in sorted(manifest['files'].items())).encode('utf-8')
    )
    manifest['content_hash'] = combined.hexdigest()
    write_json(directory / 'manifest.json', manifest)
    return manifest


def read_manifest(directory):
    path = Path(directory) / 'manifest.json'
    if not path.exists():
        raise DatasetMissingError(f'No manifest in {directory}; run gen_data first.')
    return read_json(path)


def write_json(path, payload):
    with atomic_write(path) as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=str)
        handle.write('\n')


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)


# Checkpoints ----------------------------------------------------------------

def _circuit_templates(checkpoint):
    params = checkpoint.params[0].vqc_s1
    prep = checkpoint.train_config.prep_each_layer
    return [json.loads(build_qubit_circuit(i, params, prep).to_text()) for i in range(params.n_qubits)]


def save_checkpoint(path, checkpoint, header=None):
    payload = checkpoint.to_dict()
    payload['circuit_templates'] = _circuit_templates(checkpoint)
    payload['header'] = header or {}
    write_json(path, payload)
    logger.info('Wrote checkpoint (N=%d, L=%d, T=%d) to %s.', *checkpoint.shape, path)


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise DatasetMissingError(f'Checkpoint {path} does not exist; run train first.')
    payload = read_json(path)
    checkpoint = Checkpoint.from_dict(payload)
    stored = payload.get('circuit_templates')
    if stored is not None and stored != _circuit_templates(checkpoint):
        raise ShapeMismatchError(f'Circuit templates in {path} do not match the stored parameters.',
                                 expected='rebuilt templates', found='stored templates')
    return checkpoint


def write_loss_history(path, checkpoint, header=None):
    rows = [[e['epoch'], e['train_loss'], e['val_loss']] for e in checkpoint.loss_history]
    write_csv(path, ['epoch', 'train_loss', 'val_loss'], rows, header)
