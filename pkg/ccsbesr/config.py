"""
Model and run configuration.

Config files are flat UTF-8 text with one ``key = value`` per line. ``#`` starts a comment and blank lines are
ignored. Values take the type of the key's default. ``to_text()`` writes every key in a fixed order so the text
embedded in checkpoints and logs is byte-stable.
"""
import os
import logging

from ccsbesr.utils import InvalidArgumentError


__all__ = ['ConfigError', 'format_value', 'parse_value', 'parse_config_text',
           'ModelConfig', 'RunConfig', 'LR_SCHEDULES']


LOG = logging.getLogger(__name__)

TRUE_VALUES = ('1', 'true', 'yes', 'on')
FALSE_VALUES = ('0', 'false', 'no', 'off')
LR_SCHEDULES = ('constant',)


class ConfigError(InvalidArgumentError):
    pass


def format_value(value):
    """Return the canonical text for a config value."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    elif isinstance(value, float):
        return repr(value)
    elif isinstance(value, (list, tuple)):
        return ', '.join(str(v) for v in value)
    return str(value)


def parse_value(key, text, default):
    """Parse text into the type of the default value.

    Raises:
        ConfigError: If the text cannot be converted.
    """
    text = str(text).strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in TRUE_VALUES:
                return True
            elif lowered in FALSE_VALUES:
                return False
            raise ValueError(text)
        elif isinstance(default, int):
            return int(text)
        elif isinstance(default, float):
            return float(text)
        elif isinstance(default, tuple):
            return tuple(int(item) for item in text.replace(',', ' ').split())
    except ValueError as err:
        raise ConfigError('Invalid value for "{}": "{}"'.format(key, text)) from err
    return text


def parse_config_text(text, defaults):
    """Parse ``key = value`` lines.

    Args:
        text (str): Config file contents.
        defaults (dict): Known keys and their default values.

    Returns:
        values (dict): Parsed values for the keys present in the text.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError('Line {}: expected "key = value", got "{}"'.format(lineno, line))
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in defaults:
            raise ConfigError('Line {}: unknown config key "{}"'.format(lineno, key))
        values[key] = parse_value(key, value, defaults[key])
    return values


class _KeyValueConfig(object):
    DEFAULTS = {}

    def __init__(self, **kwargs):
        unknown = sorted(set(kwargs) - set(self.DEFAULTS))
        if unknown:
            raise ConfigError('Unknown config keys: {}'.format(', '.join(unknown)))
        for key, default in self.DEFAULTS.items():
            value = kwargs.get(key, default)
            if isinstance(value, str) and not isinstance(default, str):
                value = parse_value(key, value, default)
            elif isinstance(default, tuple):
                value = tuple(int(v) for v in value)
            elif isinstance(default, bool):
                value = bool(value)
            elif isinstance(default, float):
                value = float(value)
            setattr(self, key, value)

    def to_dict(self):
        return {key: getattr(self, key) for key in self.DEFAULTS}

    def to_text(self):
        return ''.join('{} = {}\n'.format(key, format_value(getattr(self, key))) for key in self.DEFAULTS)

    @classmethod
    def from_text(cls, text):
        return cls(**parse_config_text(text, cls.DEFAULTS))

    @classmethod
    def from_file(cls, filename):
        """Read a config file. Missing keys keep their defaults."""
        try:
            with open(filename, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as err:
            raise ConfigError('Cannot read config file "{}": {}'.format(filename, err)) from err
        LOG.debug('Loaded config from %s', filename)
        return cls.from_text(text)

    def replace(self, **kwargs):
        """Return a copy with the given keys changed. None values are ignored."""
        values = self.to_dict()
        values.update({key: value for key, value in kwargs.items() if value is not None})
        return self.__class__(**values)

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return '{}({})'.format(self.__class__.__name__,
                               ', '.join('{}={!r}'.format(k, v) for k, v in self.to_dict().items()))


class ModelConfig(_KeyValueConfig):
    """Network hyperparameters.

    Args:
        scale (int)[2]: Upscaling factor, 2 or 4.
        channels (int)[64]: Feature width C.
        reduction (int)[16]: Channel attention reduction ratio r. Must divide channels.
        tau (float)[0.1]: Valid mask threshold.
        aspp_groups (int)[3]: ASPP groups per residual ASPP block.
        extraction_pairs (int)[2]: (residual ASPP block, residual block) pairs in the feature extractor.
        upsampler_ccsbs (int)[4]: CCSBs at the start of the upsampler.
        dilations (tuple)[(1, 4, 8)]: Dilation rates of the ASPP branches.
        seed (int)[0]: Parameter initialization seed.
    """

    DEFAULTS = {
        'scale': 2,
        'channels': 64,
        'reduction': 16,
        'tau': 0.1,
        'aspp_groups': 3,
        'extraction_pairs': 2,
        'upsampler_ccsbs': 4,
        'dilations': (1, 4, 8),
        'seed': 0,
        }

    @property
    def stages(self):
        """Number of x2 pixel shuffle stages."""
        return {2: 1, 4: 2}[self.scale]

    def validate(self):
        """Return self or raise ConfigError."""
        if self.scale not in (2, 4):
            raise ConfigError('scale must be 2 or 4, got {}'.format(self.scale))
        for key in ('channels', 'reduction', 'aspp_groups', 'extraction_pairs', 'upsampler_ccsbs'):
            if getattr(self, key) < 1:
                raise ConfigError('{} must be >= 1, got {}'.format(key, getattr(self, key)))
        if self.channels % self.reduction:
            raise ConfigError('reduction {} does not divide channels {}'.format(self.reduction, self.channels))
        if not self.tau > 0:
            raise ConfigError('tau must be > 0, got {}'.format(self.tau))
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError('dilations must be positive, got {}'.format(self.dilations))
        if self.seed < 0:
            raise ConfigError('seed must be >= 0, got {}'.format(self.seed))
        return self


class RunConfig(_KeyValueConfig):
    """Model keys plus training, data and output settings.

    ``batch_size = 0`` selects 8 at scale 2 and 2 at scale 4. ``patch_h``/``patch_w`` are LR pixels and 0 trains
    on full frames. ``patch_stride = 0`` tiles without overlap.
    """

    DEFAULTS = dict(ModelConfig.DEFAULTS, **{
        'epochs': 40,
        'batch_size': 0,
        'lr': 3e-4,
        'beta1': 0.9,
        'beta2': 0.999,
        'eps': 1e-8,
        'weight_sr': 1.0,
        'weight_pam': 1.0,
        'weight_stereo': 1.0,
        'data_root': '',
        'train_split': 'train',
        'val_split': 'val',
        'patch_h': 32,
        'patch_w': 96,
        'patch_stride': 0,
        'augment': True,
        'synthetic': False,
        'synthetic_count': 8,
        'synthetic_h': 64,
        'synthetic_w': 192,
        'synthetic_disparity': 4,
        'out_dir': 'runs',
        'log_every': 1,
        'resume': '',
        'threads': 1,
        'lr_schedule': 'constant',
        })

    @property
    def model(self):
        return ModelConfig(**{key: getattr(self, key) for key in ModelConfig.DEFAULTS}).validate()

    @property
    def effective_batch_size(self):
        if self.batch_size > 0:
            return self.batch_size
        return 8 if self.scale == 2 else 2

    @property
    def loss_weights(self):
        return self.weight_sr, self.weight_pam, self.weight_stereo

    def validate(self):
        """Return self or raise ConfigError."""
        self.model.validate()
        if self.epochs < 1:
            raise ConfigError('epochs must be >= 1, got {}'.format(self.epochs))
        if self.batch_size < 0:
            raise ConfigError('batch_size must be >= 0, got {}'.format(self.batch_size))
        if not self.lr > 0 or not self.eps > 0:
            raise ConfigError('lr and eps must be > 0')
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError('beta1 and beta2 must lie in [0, 1)')
        if min(self.loss_weights) < 0:
            raise ConfigError('Loss weights must be >= 0, got {}'.format(self.loss_weights))
        if (self.patch_h == 0) != (self.patch_w == 0):
            raise ConfigError('patch_h and patch_w must both be 0 (full frame) or both be set')
        if self.patch_h and min(self.patch_h, self.patch_w) < 8:
            raise ConfigError('Patch extents must be >= 8 LR pixels, got {}x{}'.format(self.patch_h, self.patch_w))
        if self.patch_stride < 0 or self.log_every < 1 or self.threads < 1:
            raise ConfigError('patch_stride must be >= 0, log_every and threads >= 1')
        if self.synthetic_count < 1:
            raise ConfigError('synthetic_count must be >= 1')
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError('lr_schedule must be one of {}, got "{}"'.format(LR_SCHEDULES, self.lr_schedule))
        if not self.synthetic and not self.data_root:
            raise ConfigError('Either synthetic = true or a data_root is required')
        if self.data_root and not self.synthetic and not os.path.isdir(self.data_root):
            raise ConfigError('data_root "{}" is not a directory'.format(self.data_root))
        return self
