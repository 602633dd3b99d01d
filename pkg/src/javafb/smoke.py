"""Hand-countable smoke corpus: 2 bug types x 5 approved triplets.

Small enough that every pipeline stage's artifact counts can be checked by
hand, repetitive enough that the desk-scale model can visibly overfit it.
"""

from __future__ import annotations

from .datagen import FeedbackTriplet, TripletStatus

SMOKE_BUGS = {
    "B2": {
        "code": "public class Check{i} {{\n    public static void main(String[] args) {{\n        int value{i} = {i};\n        if (value{i} = {i}) {{\n            System.out.println(\"match\");\n        }}\n    }}\n}}",
        "km": "The condition assigns instead of comparing.",
        "kh": "Use the comparison operator inside the condition.",
    },
    "B28": {
        "code": "public class Sum{i} {{\n    public static void main(String[] args) {{\n        int total{i} = {i}\n        System.out.println(total{i});\n    }}\n}}",
        "km": "A statement is missing its terminating semicolon.",
        "kh": "End the declaration with a semicolon and recompile.",
    },
}


def smoke_triplets() -> list[FeedbackTriplet]:
    out = []
    for bug_id, parts in SMOKE_BUGS.items():
        for i in range(1, 6):
            out.append(
                FeedbackTriplet(
                    triplet_id=f"{bug_id}-{i}",
                    bug_id=bug_id,
                    code=parts["code"].format(i=i),
                    km=parts["km"],
                    kh=parts["kh"],
                    status=TripletStatus.APPROVED,
                    reviewer="annotator-1",
                    provenance="smoke",
                )
            )
    return out
