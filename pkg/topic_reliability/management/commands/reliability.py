from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Score replications with the four reliability coefficients.'
    verb = 'reliability'
