from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Generate a synthetic corpus with its ground truth.'
    verb = 'generate'
