from enum import Enum


class Condition(str, Enum):
    """
    Trial conditions of the event-related face paradigm.

    Attributes
    ----------
    TRAIN_FACE : str
        Single presentation of a training face; carries latent parametric
        modulation.
    TEST_FACE : str
        One of the repeated test faces whose pattern is decoded.
    FIXATION : str
        Null trial with a fixation cross, no stimulus.
    ONE_BACK : str
        Immediate repeat of the preceding face (attention task); excluded
        from the parametric regressors.
    IMAGERY : str
        Mental imagery block of a previously studied face.
    """

    TRAIN_FACE = "train_face"
    TEST_FACE = "test_face"
    FIXATION = "fixation"
    ONE_BACK = "one_back"
    IMAGERY = "imagery"

    @property
    def has_stimulus(self) -> bool:
        return self is not Condition.FIXATION


class Region(str, Enum):
    OCCIPITAL = "occipital"
    TEMPORAL = "temporal"
    FRONTOPARIETAL = "frontoparietal"
    UNASSIGNED = "unassigned"


class SegmentAxis(str, Enum):
    """
    Axis used to split the non-occipital voxels into two halves.

    Attributes
    ----------
    Z : str
        Inferior half labelled temporal, superior half frontoparietal.
    Y : str
        Anterior (rostral) half labelled temporal, posterior half
        frontoparietal.
    """

    Z = "z"
    Y = "y"


class StatMethod(str, Enum):
    MONTE_CARLO = "monte_carlo"
    ENUMERATION = "enumeration"
    BINOMIAL = "binomial"
    FRIEDMAN = "friedman"


class AttributeLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    TIE = "tie"


class PatternSource(str, Enum):
    """
    How test-face activity patterns are obtained from a run.

    Attributes
    ----------
    GLM_BETA : str
        One regressor per test stimulus in the GLM; its betas are the
        patterns.
    PEAK_AVERAGE : str
        Scans at the HRF peak after each repetition, averaged per stimulus.
    """

    GLM_BETA = "glm_beta"
    PEAK_AVERAGE = "peak_average"
