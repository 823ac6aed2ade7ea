from django.apps import AppConfig


class TopicReliabilityConfig(AppConfig):
    name = 'topic_reliability'
    verbose_name = 'Topic model reliability'
