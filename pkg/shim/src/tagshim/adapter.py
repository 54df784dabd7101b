"""Hook for plugging a real model into external-model mode."""


def external_model(samples, sample_rate, tags):
    """Score one clip with a user-supplied model.

    Replace this body with a call into your model runtime (an ONNX
    session, a torch module, a vendor SDK) returning a mapping with one
    float per configured tag. It ships as a stub so the package carries
    no model dependencies; until it is implemented the server answers
    external-model requests with an error reply instead of scores.
    """
    raise NotImplementedError(
        "external_model is a stub: edit tagshim/adapter.py to call your "
        "model, or run with --mode rule-based"
    )
