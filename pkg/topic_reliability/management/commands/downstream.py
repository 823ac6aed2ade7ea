from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Fit per-replication logistic models and summarise word weights.'
    verb = 'downstream'
