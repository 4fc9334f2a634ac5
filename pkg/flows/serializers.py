"""
Serializers for policy snapshot documents
"""

from rest_framework import serializers

from graphs.serializers import StrictSerializer

from .policy import BACKWARD_LEARNED, BACKWARD_UNIFORM


class GraphShapeSerializer(StrictSerializer):
    states = serializers.IntegerField(min_value=1)
    edges = serializers.IntegerField(min_value=0)
    terminals = serializers.IntegerField(min_value=1)


class PolicySnapshotSerializer(StrictSerializer):
    graph = GraphShapeSerializer()
    backward_mode = serializers.ChoiceField(choices=[BACKWARD_UNIFORM, BACKWARD_LEARNED])
    log_Z = serializers.FloatField()
    forward_logits = serializers.DictField(child=serializers.ListField(child=serializers.FloatField()))
    backward_logits = serializers.DictField(
        child=serializers.ListField(child=serializers.FloatField()), required=False, allow_null=True, default=None
    )
    log_state_flow = serializers.DictField(
        child=serializers.FloatField(), required=False, allow_null=True, default=None
    )
    forward_tie = serializers.ListField(
        child=serializers.IntegerField(min_value=0), required=False, allow_null=True, default=None
    )
    forward_params = serializers.ListField(
        child=serializers.FloatField(), required=False, allow_null=True, default=None
    )

    def validate(self, attrs):
        if (attrs.get('forward_tie') is None) != (attrs.get('forward_params') is None):
            raise serializers.ValidationError('forward_tie and forward_params must be given together')
        if attrs['backward_mode'] == BACKWARD_LEARNED and attrs.get('backward_logits') is None:
            raise serializers.ValidationError({'backward_logits': ['Required when backward_mode is learned.']})
        return attrs
