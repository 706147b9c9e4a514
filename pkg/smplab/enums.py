from django.utils.translation import gettext_lazy as _

from enumfields import Choice, IntegerChoicesEnum


class BoundarySide(IntegerChoicesEnum):

    LEFT = Choice(0, _('Left'))
    RIGHT = Choice(1, _('Right'))


class ControlSetKind(IntegerChoicesEnum):

    FINITE_SET = Choice(1, _('Finite set'))
    BOX = Choice(2, _('Box'))


class HypothesisStatus(IntegerChoicesEnum):

    STRUCTURAL_PASS = Choice(1, _('Structural pass'))
    SAMPLED_PASS = Choice(2, _('Sampled pass'))
    FAIL = Choice(3, _('Fail'))
    NOT_APPLICABLE = Choice(4, _('Not applicable'))


class Verdict(IntegerChoicesEnum):

    PASS = Choice(1, _('Pass'))
    FAIL = Choice(2, _('Fail'))
    INFO = Choice(3, _('Info'))
