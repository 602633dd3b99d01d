"""Regenerate the shipped reference corpus fixture (deterministic).

The real ground-truth triplets live in an external repository; this fixture
mirrors its structure (5 approved triplets per taxonomy bug, 425 total) with
synthesized stand-in content so corpus assembly, splitting, and training can
be exercised end to end. Run from the repo root:

    python scripts/make_reference_corpus.py
"""

from __future__ import annotations

from pathlib import Path

from javafb.datagen import FeedbackTriplet, TripletStatus, write_triplets
from javafb.taxonomy import load_reference_taxonomy

VEHICLE_CAR_CODE = """\
import java.util.*;
class Vehicle {}
class Car extends Vehicle {
    void startEngine() {
        System.out.println("Vroom!");
    }
}
public class Main {
    public static void main(String[] args) {
        List<Vehicle> vehicles = new ArrayList<>();
        vehicles.add(new Car());
        for (Vehicle v : vehicles) {
            v.startEngine();
        }
    }
}"""

VEHICLE_CAR_KM = (
    "Compile-time type of `v` is `Vehicle`, which lacks the `startEngine()` method. "
    "Polymorphism doesn't automatically expose subclass-specific methods without explicit casting."
)
VEHICLE_CAR_KH = (
    "Cast `v` to `Car` inside the loop before calling `startEngine()`, "
    "ensuring `v` is a `Car` instance."
)


def scaffold(bug_num: int, variant: int, description: str) -> str:
    cls = f"Exercise{bug_num}V{variant}"
    comment = f"// scenario {variant}: {description}"
    bodies = {
        1: (
            f"public class {cls} {{\n"
            f"    public static void main(String[] args) {{\n"
            f"        {comment}\n"
            f"        int total = 0;\n"
            f"        for (int i = 0; i < 5; i++) {{\n"
            f"            total = total + i;\n"
            f"        }}\n"
            f"        System.out.println(total);\n"
            f"    }}\n"
            f"}}"
        ),
        2: (
            f"public class {cls} {{\n"
            f"    {comment}\n"
            f"    static int doubleIt(int value) {{\n"
            f"        return value * 2;\n"
            f"    }}\n"
            f"    public static void main(String[] args) {{\n"
            f"        System.out.println(doubleIt(21));\n"
            f"    }}\n"
            f"}}"
        ),
        3: (
            f"public class {cls} {{\n"
            f"    private String name;\n"
            f"    {cls}(String name) {{\n"
            f"        {comment}\n"
            f"        this.name = name;\n"
            f"    }}\n"
            f"    public static void main(String[] args) {{\n"
            f"        {cls} item = new {cls}(\"demo\");\n"
            f"        System.out.println(item.name);\n"
            f"    }}\n"
            f"}}"
        ),
        4: (
            f"public class {cls} {{\n"
            f"    public static void main(String[] args) {{\n"
            f"        {comment}\n"
            f"        int[] values = {{3, 1, 4, 1, 5}};\n"
            f"        int max = values[0];\n"
            f"        for (int i = 1; i < values.length; i++) {{\n"
            f"            if (values[i] > max) {{\n"
            f"                max = values[i];\n"
            f"            }}\n"
            f"        }}\n"
            f"        System.out.println(max);\n"
            f"    }}\n"
            f"}}"
        ),
        5: (
            f"class Base{bug_num} {{\n"
            f"    void describe() {{\n"
            f"        System.out.println(\"base\");\n"
            f"    }}\n"
            f"}}\n"
            f"public class {cls} extends Base{bug_num} {{\n"
            f"    public static void main(String[] args) {{\n"
            f"        {comment}\n"
            f"        new {cls}().describe();\n"
            f"    }}\n"
            f"}}"
        ),
    }
    return bodies[variant]


KM_ANGLES = {
    1: "The loop-based version trips over it while accumulating the total.",
    2: "The helper method makes the faulty construct easy to spot in isolation.",
    3: "The constructor is where the mistake surfaces first.",
    4: "The array scan masks the mistake until the program runs.",
    5: "The subclass interaction is where the misunderstanding shows.",
}

KH_ANGLES = {
    1: "Trace the loop by hand for the first two iterations and compare with what you expected.",
    2: "Read the method signature and its call site side by side.",
    3: "Check what the constructor promises against what the caller provides.",
    4: "Print the intermediate values and watch where they diverge.",
    5: "Draw the class relationship and mark which member belongs where.",
}


def build_triplets():
    registry = load_reference_taxonomy()
    triplets = []
    for bug in registry:
        bug_num = int(bug.bug_id.lstrip("B"))
        for variant in range(1, 6):
            if bug.bug_id == "B41" and variant == 1:
                code, km, kh = VEHICLE_CAR_CODE, VEHICLE_CAR_KM, VEHICLE_CAR_KH
            else:
                code = scaffold(bug_num, variant, bug.description)
                km = (
                    f"The code demonstrates this mistake: {bug.description}. "
                    f"{KM_ANGLES[variant]}"
                )
                kh = (
                    f"{KH_ANGLES[variant]} Then revise the construct tied to "
                    f"\"{bug.description}\" yourself; no corrected code is provided."
                )
            triplets.append(
                FeedbackTriplet(
                    triplet_id=f"{bug.bug_id}-{variant}",
                    bug_id=bug.bug_id,
                    code=code,
                    km=km,
                    kh=kh,
                    status=TripletStatus.APPROVED,
                    reviewer="annotator-1",
                    provenance="reference-v1",
                )
            )
    return triplets


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "src" / "javafb" / "data" / "reference_corpus.jsonl"
    triplets = build_triplets()
    write_triplets(out, triplets)
    print(f"wrote {len(triplets)} triplets to {out}")
