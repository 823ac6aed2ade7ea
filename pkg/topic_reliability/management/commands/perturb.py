from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Measure how reliability responds to removing a few words.'
    verb = 'perturb'
