"""Schema validation of experiment JSON configs, one Django form per config section."""

import math

from django import forms

from utils.exceptions import ConfigError

FAMILY_CHOICES = (
    ('Quadratic', 'Quadratic'),
    ('RidgeLogistic', 'Ridge-regularised logistic'),
    ('Logistic', 'Logistic'),
    ('SmoothNonconvex', 'Smooth nonconvex (sigmoid squared loss)'),
)
SOURCE_CHOICES = (('synthetic', 'Synthetic'), ('csv', 'CSV file'))
SELECTION_CHOICES = (
    ('first_m', 'First m samples'),
    ('random_seeded', 'Seeded random subset'),
    ('explicit_indices', 'Explicit index list'),
)
ALGORITHM_CHOICES = (('R2D', 'Rewind-to-Delete'), ('D2D', 'Descent-to-Delete'))
METHOD_CHOICES = (('PSGD_R2D', 'PSGD-R2D'), ('SGD_R2D', 'SGD-R2D'), ('SGD_D2D', 'SGD-D2D'))
REGIME_CHOICES = (('StronglyConvex', 'Strongly convex'), ('Convex', 'Convex'), ('Nonconvex', 'Nonconvex'))
VARIANT_CHOICES = (('appendix', 'Appendix'), ('main', 'Main text'))
NOISE_MODE_CHOICES = (('noiseless_checkpoint', 'Noiseless checkpoint'), ('noisy_release', 'Noisy release'))
AXIS_CHOICES = (('K', 'K'), ('T', 'T'), ('epsilon', 'epsilon'), ('m', 'm'))


def _number_list(value, name, integer=False, allow_empty=False):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or (not value and not allow_empty):
        raise forms.ValidationError(f"{name} must be a non-empty list")
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise forms.ValidationError(f"{name} entries must be numbers")
        if not math.isfinite(item):
            raise forms.ValidationError(f"{name} entries must be finite")
        if integer and int(item) != item:
            raise forms.ValidationError(f"{name} entries must be integers")
        out.append(int(item) if integer else float(item))
    return out


def _default(cleaned_data, name, value):
    if cleaned_data.get(name) in (None, ''):
        cleaned_data[name] = value


class ExperimentForm(forms.Form):
    name = forms.CharField(required=False, max_length=200)
    seed = forms.IntegerField(min_value=0)
    replicas = forms.IntegerField(min_value=1, required=False)
    negative_fixture = forms.NullBooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        _default(cleaned_data, 'replicas', 100)
        cleaned_data['negative_fixture'] = bool(cleaned_data.get('negative_fixture'))
        return cleaned_data


class LossForm(forms.Form):
    family = forms.ChoiceField(choices=FAMILY_CHOICES)
    params = forms.JSONField(required=False)
    data_radius = forms.FloatField()
    projection = forms.JSONField(required=False)

    def clean_data_radius(self):
        radius = self.cleaned_data['data_radius']
        if radius <= 0:
            raise forms.ValidationError("data_radius must be positive")
        return radius

    def clean_params(self):
        params = self.cleaned_data.get('params') or {}
        if not isinstance(params, dict):
            raise forms.ValidationError("params must be an object")
        return params

    def clean_projection(self):
        projection = self.cleaned_data.get('projection')
        if projection is None:
            return None
        if not isinstance(projection, dict) or 'radius' not in projection:
            raise forms.ValidationError("projection must be an object with a radius")
        radius = projection['radius']
        if isinstance(radius, bool) or not isinstance(radius, (int, float)) or not (0 < radius < math.inf):
            raise forms.ValidationError("projection radius must be a positive number")
        center = _number_list(projection.get('center'), 'projection center')
        return {'radius': float(radius), 'center': center}

    def clean(self):
        cleaned_data = super().clean()
        family = cleaned_data.get('family')
        params = cleaned_data.get('params') or {}
        if family == 'RidgeLogistic' and not params.get('lambda'):
            raise forms.ValidationError("RidgeLogistic requires params.lambda > 0")
        return cleaned_data


class DatasetForm(forms.Form):
    source = forms.ChoiceField(choices=SOURCE_CHOICES)
    n = forms.IntegerField(min_value=1, required=False)
    d = forms.IntegerField(min_value=1, required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    path = forms.CharField(required=False)
    has_header = forms.NullBooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        source = cleaned_data.get('source')
        if source == 'synthetic' and (cleaned_data.get('n') is None or cleaned_data.get('d') is None):
            raise forms.ValidationError("synthetic datasets need n and d")
        if source == 'csv' and not cleaned_data.get('path'):
            raise forms.ValidationError("csv datasets need a path")
        if cleaned_data.get('has_header') is None:
            cleaned_data['has_header'] = True
        return cleaned_data


class UnlearnForm(forms.Form):
    m = forms.IntegerField(min_value=1, required=False)
    selection = forms.ChoiceField(choices=SELECTION_CHOICES, required=False)
    indices = forms.JSONField(required=False)
    seed = forms.IntegerField(min_value=0, required=False)

    def clean_indices(self):
        return _number_list(self.cleaned_data.get('indices'), 'indices', integer=True)

    def clean(self):
        cleaned_data = super().clean()
        _default(cleaned_data, 'selection', 'first_m')
        if cleaned_data['selection'] == 'explicit_indices':
            if not cleaned_data.get('indices'):
                raise forms.ValidationError("explicit_indices selection needs an indices list")
        elif cleaned_data.get('m') is None:
            raise forms.ValidationError(f"{cleaned_data['selection']} selection needs m")
        return cleaned_data


class RunForm(forms.Form):
    eta = forms.FloatField()
    T = forms.IntegerField(min_value=0)
    K = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1)
    projected = forms.NullBooleanField(required=False)
    algorithm = forms.ChoiceField(choices=ALGORITHM_CHOICES, required=False)
    theta0 = forms.JSONField(required=False)
    store_iterates = forms.NullBooleanField(required=False)
    record_every = forms.IntegerField(min_value=1, required=False)
    diagnostics = forms.NullBooleanField(required=False)
    plan_horizon = forms.NullBooleanField(required=False)

    def clean_eta(self):
        eta = self.cleaned_data['eta']
        if eta <= 0:
            raise forms.ValidationError("eta must be positive")
        return eta

    def clean_theta0(self):
        return _number_list(self.cleaned_data.get('theta0'), 'theta0')

    def clean(self):
        cleaned_data = super().clean()
        _default(cleaned_data, 'algorithm', 'R2D')
        _default(cleaned_data, 'record_every', 1)
        for flag, value in (('projected', True), ('store_iterates', False), ('diagnostics', False),
                            ('plan_horizon', False)):
            _default(cleaned_data, flag, value)
        if cleaned_data['algorithm'] == 'D2D' and cleaned_data['projected']:
            raise forms.ValidationError("D2D runs are unprojected; set projected to false")
        if cleaned_data['plan_horizon'] and cleaned_data['algorithm'] != 'D2D':
            raise forms.ValidationError("plan_horizon only applies to D2D runs")
        T, K = cleaned_data.get('T'), cleaned_data.get('K')
        if T is not None and K is not None and K > T and not cleaned_data['plan_horizon']:
            raise forms.ValidationError(f"K={K} exceeds T={T}")
        return cleaned_data


class PrivacyForm(forms.Form):
    epsilon = forms.FloatField()
    delta = forms.FloatField()

    def clean(self):
        cleaned_data = super().clean()
        epsilon, delta = cleaned_data.get('epsilon'), cleaned_data.get('delta')
        if epsilon is not None and epsilon <= 0:
            raise forms.ValidationError("epsilon must be positive")
        if delta is not None and not 0 < delta < 1:
            raise forms.ValidationError("delta must lie in (0, 1)")
        return cleaned_data


class CertifyForm(forms.Form):
    method = forms.ChoiceField(choices=METHOD_CHOICES, required=False)
    regime = forms.ChoiceField(choices=REGIME_CHOICES, required=False)
    variant = forms.ChoiceField(choices=VARIANT_CHOICES, required=False)
    noise_mode = forms.ChoiceField(choices=NOISE_MODE_CHOICES, required=False)
    target_sigma = forms.FloatField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        _default(cleaned_data, 'variant', 'appendix')
        _default(cleaned_data, 'noise_mode', 'noiseless_checkpoint')
        for name in ('method', 'regime'):
            if cleaned_data.get(name) == '':
                cleaned_data[name] = None
        target = cleaned_data.get('target_sigma')
        if target is not None and target < 0:
            raise forms.ValidationError("target_sigma must be nonnegative")
        return cleaned_data


class VerifyForm(forms.Form):
    trials = forms.IntegerField(min_value=1, required=False)
    contraction_eta = forms.FloatField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        _default(cleaned_data, 'trials', 10_000)
        eta = cleaned_data.get('contraction_eta')
        if eta is not None and eta <= 0:
            raise forms.ValidationError("contraction_eta must be positive")
        return cleaned_data


class SweepForm(forms.Form):
    axis = forms.ChoiceField(choices=AXIS_CHOICES)
    values = forms.JSONField()
    monte_carlo = forms.NullBooleanField(required=False)

    def clean_values(self):
        return _number_list(self.cleaned_data.get('values'), 'values')

    def clean(self):
        cleaned_data = super().clean()
        cleaned_data['monte_carlo'] = bool(cleaned_data.get('monte_carlo'))
        if cleaned_data.get('axis') in ('K', 'T', 'm') and cleaned_data.get('values'):
            if any(int(v) != v for v in cleaned_data['values']):
                raise forms.ValidationError(f"{cleaned_data['axis']} values must be integers")
            cleaned_data['values'] = [int(v) for v in cleaned_data['values']]
        return cleaned_data


SECTION_FORMS = {
    'loss': (LossForm, True),
    'dataset': (DatasetForm, True),
    'unlearn': (UnlearnForm, True),
    'run': (RunForm, True),
    'privacy': (PrivacyForm, True),
    'certify': (CertifyForm, False),
    'verify': (VerifyForm, False),
    'sweep': (SweepForm, False),
}


def _form_errors(prefix, form):
    messages = []
    for field, errors in form.errors.items():
        where = prefix if field == '__all__' else f"{prefix}.{field}"
        messages.extend(f"{where}: {error}" for error in errors)
    return messages


def validate_config(raw):
    """Validate a raw config dict section by section.

    Returns the cleaned sections (top-level keys under 'experiment'); raises
    ConfigError listing every section error.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    errors = []
    top = ExperimentForm(data={k: raw.get(k) for k in ('name', 'seed', 'replicas', 'negative_fixture')})
    cleaned = {}
    if top.is_valid():
        cleaned['experiment'] = top.cleaned_data
    else:
        errors += _form_errors('config', top)

    for section, (form_class, required) in SECTION_FORMS.items():
        data = raw.get(section)
        if data is None:
            if required:
                errors.append(f"{section}: section is required")
            elif section != 'sweep':
                form = form_class(data={})
                if form.is_valid():
                    cleaned[section] = form.cleaned_data
            continue
        if not isinstance(data, dict):
            errors.append(f"{section}: must be an object")
            continue
        form = form_class(data=data)
        if form.is_valid():
            cleaned[section] = form.cleaned_data
        else:
            errors += _form_errors(section, form)

    unknown = sorted(set(raw) - set(SECTION_FORMS) - {'name', 'seed', 'replicas', 'negative_fixture'})
    if unknown:
        errors.append(f"unknown config keys: {', '.join(unknown)}")
    if errors:
        raise ConfigError("invalid config: " + "; ".join(errors))
    return cleaned
