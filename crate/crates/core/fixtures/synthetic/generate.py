"""Regenerates the synthetic evidence corpus (manifest, annotations, images).

Deterministic: running it twice produces identical files.
"""
import json
import os
import struct
import zlib

HERE = os.path.dirname(os.path.abspath(__file__))
T0 = 1_700_000_000


def png(path, rgb):
    # 4x4 solid-colour PNG, written by hand so no imaging library is needed.
    raw = b"".join(b"\x00" + bytes(rgb) * 4 for _ in range(4))

    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 4, 8, 2, 0, 0, 0)))
        f.write(chunk(b"IDAT", zlib.compress(raw, 9)))
        f.write(chunk(b"IEND", b""))


def assoc(content, dt, thread="thread-a", source="investigator report"):
    return {"content": content, "thread_id": thread, "timestamp": T0 + dt, "source": source}


# (media_id, ocr_text, assoc_texts, harmful)
ITEMS = [
    # DS1: embedded + associated text
    ("ev-001", "I will kill you", [assoc("He sent this right after the argument, said he would hurt you", 30)], True),
    ("ev-002", "bring the gun", [assoc("Message came with a photo of a rifle", 45), assoc("Suspect owns a pistol", 110)], True),
    ("ev-003", "watch your back", [assoc("Victim reports being scared to go home", -60)], True),
    ("ev-004", "happy birthday!!", [assoc("Family photo shared at the holiday dinner", 10)], False),
    ("ev-005", "rise up and burn it down", [assoc("Posted to the group chat before the riot", 90)], True),
    ("ev-006", "you stupid loser", [assoc("Repeated messages calling the victim pathetic", 20), assoc("See attached thread", 400)], True),
    ("ev-007", "i want to die", [assoc("Friend flagged the post as possible suicide risk", 5)], True),
    ("ev-008", "see you at lunch", [assoc("Coworkers planning lunch on the weekend", 120)], False),
    ("ev-009", "we robbed the store", [assoc("Statement: i did it, we stole the cash", 75)], True),
    ("ev-010", "gun idiot", [assoc("Photo shows a knife and a stupid caption", 15)], True),
    ("ev-011", "coffee meeting 10am", [assoc("Meeting notes, thanks everyone", 0), assoc("Weather was fine", 121)], False),
    ("ev-012", "those people are vermin", [assoc("Flyer found near the community center, calls them subhuman", 60, thread="thread-b")], True),
    # DS2: embedded text only (some with rejected associations)
    ("ev-013", "I know where you live", [], True),
    ("ev-014", "kill kill kill", [], True),
    ("ev-015", "ammo for sale, shotgun and bullets", [assoc("Listing appeared in another thread", 30, thread="thread-z")], True),
    ("ev-016", "Thanks for dinner!", [], False),
    ("ev-017", "send nudes or else", [], True),
    ("ev-018", "moron", [assoc("Reply arrived hours later", 7200)], True),
    ("ev-019", "gun idiot", [], True),
    ("ev-020", "weekend weather looks great", [], False),
    ("ev-021", "storm the building, make them pay", [{"content": "Unattributed tip", "source": "anonymous"}], True),
    ("ev-022", "end it all tonight", [], True),
    ("ev-023", "broke into the house, burglary done", [], True),
    ("ev-024", "see you soon", [], False),
    # DS3: associated text only (no or unusable OCR)
    ("ev-025", None, [assoc("Suspect said he is coming for you", 50)], True),
    ("ev-026", "a!", [assoc("Image of a pistol sent with the caption about ammo", 20)], True),
    ("ev-027", None, [assoc("Group asked members to take up arms", 100), assoc("Follow-up message: attack them at dawn", 115)], True),
    ("ev-028", None, [assoc("Family lunch photo from the holiday", 0)], False),
    ("ev-029", "~~", [assoc("Ex-partner threatened to leak explicit photos", -30)], True),
    ("ev-030", None, [assoc("Victim says the sender keeps following you everywhere messages", 60)], True),
    ("ev-031", None, [assoc("Message full of damn trash talk, called him scum", 10)], True),
    ("ev-032", None, [assoc("Birthday dinner with family", 5), assoc("Thanks for coming", 65)], False),
    ("ev-033", None, [assoc("Admitted he smuggled and laundered money", 119), assoc("Second message arrived late", 500)], True),
    ("ev-034", None, [assoc("Post says no reason to live", 1)], True),
    ("ev-035", "..", [assoc("Caption mentions a gun and calls the victim an idiot", 30)], True),
    ("ev-036", None, [assoc("Neighbour note about the weekend meeting", 70)], False),
    # DS4: image only (including items whose associations were rejected)
    ("ev-037", None, [], True),
    ("ev-038", None, [], False),
    ("ev-039", None, [assoc("Unrelated chat about a knife", 30, thread="thread-q")], True),
    ("ev-040", None, [assoc("Message far outside the window", 121)], True),
    ("ev-041", "", [], False),
    ("ev-042", "?!", [], True),
    ("ev-043", None, [{"content": "No thread recorded", "timestamp": T0, "source": "metadata"}], True),
    ("ev-044", None, [], True),
    ("ev-045", None, [assoc("Different thread", 0, thread="thread-c"), assoc("Too late", -200)], False),
    ("ev-046", None, [], True),
    ("ev-047", None, [], True),
    ("ev-048", None, [], False),
]

# Items whose image metadata lacks a thread, so every association is rejected.
NO_IMAGE_THREAD = {"ev-043"}
# Image thread differs for ev-012 so its thread-b association is linked.
IMAGE_THREAD = {"ev-012": "thread-b"}


def main():
    os.makedirs(os.path.join(HERE, "images"), exist_ok=True)
    with open(os.path.join(HERE, "manifest.jsonl"), "w") as manifest, \
            open(os.path.join(HERE, "annotations.jsonl"), "w") as annotations:
        for n, (media_id, ocr, assocs, harmful) in enumerate(ITEMS):
            image = f"images/{media_id}.png"
            png(os.path.join(HERE, image), ((n * 37) % 256, (n * 91) % 256, (n * 53) % 256))
            record = {"media_id": media_id, "image_path": image, "image_timestamp": T0}
            if media_id not in NO_IMAGE_THREAD:
                record["image_thread_id"] = IMAGE_THREAD.get(media_id, "thread-a")
            if ocr is not None:
                record["ocr_text"] = ocr
            if assocs:
                record["assoc_texts"] = assocs
            manifest.write(json.dumps(record) + "\n")
            annotations.write(json.dumps({"media_id": media_id, "harmful": harmful}) + "\n")


if __name__ == "__main__":
    main()
