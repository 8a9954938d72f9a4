"""
Forms validating the sections of an experiment configuration file.

Each form receives the merged string values of one INI section (defaults,
file, environment, command-line flags) and produces typed cleaned data.
"""
import math

from django import forms

from .cs_solvers import LeVariant

LE_VARIANT_CHOICES = [
    (LeVariant.MATCHED_FILTER.value, 'Matched filter'),
    (LeVariant.PSEUDO_INVERSE.value, 'Pseudo-inverse'),
    (LeVariant.LMMSE.value, 'LMMSE'),
]

SOLVER_CHOICES = [
    ('ista', 'ISTA'),
    ('fista', 'FISTA'),
    ('oamp', 'OAMP'),
    ('vqc_cs', 'VQC-CS'),
]

GRADIENT_CHOICES = [
    ('autograd', 'Automatic differentiation'),
    ('parameter_shift', 'Parameter-shift rule'),
]


class SnrField(forms.FloatField):
    """Float field that also accepts ``inf`` (noise-free transmission)."""

    def to_python(self, value):
        if isinstance(value, str) and value.strip().lower() in ('inf', '+inf'):
            return math.inf
        return super().to_python(value)

    def validate(self, value):
        if value == math.inf:
            return
        super().validate(value)


class ScenarioForm(forms.Form):
    """
    System scenario: device count, measurements, activity statistics, SNR and
    pilot conditioning.
    """
    n_devices = forms.IntegerField(min_value=2)
    n_measurements = forms.IntegerField(min_value=1)
    activity_rate = forms.FloatField()
    correlation = forms.FloatField()
    snr_db = SnrField()
    condition_number = forms.FloatField(min_value=1.0)
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    shared_pilot = forms.BooleanField(required=False)

    def clean_activity_rate(self):
        """Activity rate must be a probability strictly inside (0, 1)."""
        rho = self.cleaned_data.get('activity_rate')
        if rho is not None and not 0 < rho < 1:
            raise forms.ValidationError('Activity rate must lie strictly between 0 and 1.')
        return rho

    def clean_correlation(self):
        gamma = self.cleaned_data.get('correlation')
        if gamma is not None and not 0 <= gamma < 1:
            raise forms.ValidationError('Correlation must lie in [0, 1).')
        return gamma

    def clean(self):
        """Ensure the problem is under-determined (M < N)."""
        cleaned_data = super().clean()
        n = cleaned_data.get('n_devices')
        m = cleaned_data.get('n_measurements')
        if n is not None and m is not None and m >= n:
            self.add_error('n_measurements', f'Must be below n_devices ({n}).')
        return cleaned_data


class TrainForm(forms.Form):
    """Training hyper-parameters of the unrolled VQC-CS pipeline."""
    decay = forms.FloatField()
    learning_rate = forms.FloatField()
    n_layers = forms.IntegerField(min_value=1)
    n_iterations = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    epochs = forms.IntegerField(min_value=0)
    optimizer = forms.ChoiceField(choices=[('rmsprop', 'RMSProp')])
    rmsprop_smoothing = forms.FloatField(min_value=0.0)
    rmsprop_epsilon = forms.FloatField()
    seed = forms.IntegerField(min_value=0)
    validation_fraction = forms.FloatField(min_value=0.0)
    share_parameters = forms.BooleanField(required=False)
    le_variant = forms.ChoiceField(choices=LE_VARIANT_CHOICES)
    prep_each_layer = forms.BooleanField(required=False)
    gradient_method = forms.ChoiceField(choices=GRADIENT_CHOICES)
    n_restarts = forms.IntegerField(min_value=1)

    def clean_decay(self):
        decay = self.cleaned_data.get('decay')
        if decay is not None and not 0 < decay <= 1:
            raise forms.ValidationError('Exponential decay must lie in (0, 1].')
        return decay

    def clean_learning_rate(self):
        lr = self.cleaned_data.get('learning_rate')
        if lr is not None and lr <= 0:
            raise forms.ValidationError('Learning rate must be positive.')
        return lr

    def clean_rmsprop_smoothing(self):
        beta = self.cleaned_data.get('rmsprop_smoothing')
        if beta is not None and beta >= 1:
            raise forms.ValidationError('Smoothing constant must be below 1.')
        return beta

    def clean_rmsprop_epsilon(self):
        eps = self.cleaned_data.get('rmsprop_epsilon')
        if eps is not None and eps <= 0:
            raise forms.ValidationError('Epsilon must be positive.')
        return eps

    def clean_validation_fraction(self):
        fraction = self.cleaned_data.get('validation_fraction')
        if fraction is not None and fraction >= 1:
            raise forms.ValidationError('Validation fraction must be below 1.')
        return fraction


class SolversForm(forms.Form):
    """
    Solvers to evaluate and their settings.

    A blank threshold is selected on the validation split.
    """
    solvers = forms.CharField()
    ista_threshold = forms.FloatField(required=False, min_value=0.0)
    fista_threshold = forms.FloatField(required=False, min_value=0.0)
    oamp_variant = forms.ChoiceField(choices=LE_VARIANT_CHOICES)

    def clean_solvers(self):
        """Comma separated subset of the known solvers, order preserved."""
        raw = self.cleaned_data.get('solvers', '')
        names = [name.strip().lower() for name in raw.split(',') if name.strip()]
        known = {key for key, _ in SOLVER_CHOICES}
        unknown = [name for name in names if name not in known]
        if unknown:
            raise forms.ValidationError(f'Unknown solver(s): {", ".join(unknown)}.')
        if not names:
            raise forms.ValidationError('Select at least one solver.')
        return tuple(dict.fromkeys(names))


class PostprocForm(forms.Form):
    """Activity-detection MLP trained after VQC-CS."""
    enabled = forms.BooleanField(required=False)
    learning_rate = forms.FloatField()
    epochs = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1)
    rmsprop_smoothing = forms.FloatField(min_value=0.0)
    rmsprop_epsilon = forms.FloatField()
    seed = forms.IntegerField(min_value=0)

    def clean_learning_rate(self):
        lr = self.cleaned_data.get('learning_rate')
        if lr is not None and lr <= 0:
            raise forms.ValidationError('Learning rate must be positive.')
        return lr

    def clean_rmsprop_smoothing(self):
        beta = self.cleaned_data.get('rmsprop_smoothing')
        if beta is not None and beta >= 1:
            raise forms.ValidationError('Smoothing constant must be below 1.')
        return beta


class ExperimentForm(forms.Form):
    """Dataset sizes, output location and execution settings."""
    output_dir = forms.CharField()
    n_train = forms.IntegerField(min_value=1)
    n_validation = forms.IntegerField(min_value=1)
    n_test = forms.IntegerField(min_value=1)
    min_eval_samples = forms.IntegerField(min_value=0)
    workers = forms.IntegerField(min_value=1)
    chunk_size = forms.IntegerField(min_value=1)
    shots = forms.IntegerField(min_value=0)

    def clean(self):
        """The test split must meet the evaluation sample floor."""
        cleaned_data = super().clean()
        n_test = cleaned_data.get('n_test')
        floor = cleaned_data.get('min_eval_samples')
        if n_test is not None and floor is not None and n_test < floor:
            self.add_error('n_test', f'At least {floor} evaluation samples are required (got {n_test}).')
        return cleaned_data
