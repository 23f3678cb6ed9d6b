from .bayes import BayesError, GnbModel, gnb_predict, gnb_train
from .svm import (
    BinarySvm,
    ConvergenceWarning,
    MulticlassSvm,
    SvmError,
    decision_value,
    kkt_violations,
    ovo_decisions,
    ovo_predict,
    ovo_train,
    rbf_kernel,
    rbf_matrix,
    smo_train,
    vote,
)
