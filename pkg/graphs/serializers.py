"""
Django REST framework serializers validating graph documents
"""

from collections.abc import Mapping

from rest_framework import serializers


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class StateRecordSerializer(StrictSerializer):
    id = serializers.IntegerField(min_value=0)
    terminal = serializers.BooleanField()
    label = serializers.JSONField(required=False, allow_null=True, default=None)


class GraphDocumentSerializer(StrictSerializer):
    initial = serializers.IntegerField(min_value=0)
    states = StateRecordSerializer(many=True, allow_empty=False)
    edges = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=2, max_length=2),
        allow_empty=True,
    )


def flatten_errors(errors, prefix=''):
    """
    Turn nested serializer errors into ``field[index].field: message`` lines

    Example:
        {'states': [{}, {'terminal': ['Must be a valid boolean.']}]}
        → ['states[1].terminal: Must be a valid boolean.']
    """
    lines = []
    if isinstance(errors, Mapping):
        for key, value in errors.items():
            name = 'document' if key == 'non_field_errors' and not prefix else str(key)
            lines.extend(flatten_errors(value, f'{prefix}.{name}' if prefix else name))
    elif isinstance(errors, (list, tuple)):
        if errors and all(isinstance(item, str) for item in errors):
            lines.append(f'{prefix or "document"}: {"; ".join(str(item) for item in errors)}')
        else:
            for index, item in enumerate(errors):
                if item:
                    lines.extend(flatten_errors(item, f'{prefix}[{index}]'))
    elif errors:
        lines.append(f'{prefix or "document"}: {errors}')
    return lines
