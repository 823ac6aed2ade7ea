from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Align replications to the reference and write cosine distributions.'
    verb = 'align'
