from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Fit LDA replications for every K.'
    verb = 'fit'
