#!/usr/bin/env python3
"""Regenerates the trajectory fixtures under data/fixtures/."""
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "fixtures")


def write_trajectory(name, header, steps):
    path = os.path.join(OUT, name)
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for i, step in enumerate(steps, start=1):
            rec = {"step_index": i, "command": step[0], "raw_output": step[1]}
            if len(step) > 2 and step[2] is not None:
                rec["agent_message"] = step[2]
            f.write(json.dumps(rec) + "\n")


def apt_log(pkgs):
    lines = ["Reading package lists... Done", "Building dependency tree... Done"]
    for i, pkg in enumerate(pkgs, start=1):
        lines.append(
            f"Get:{i} http://archive.ubuntu.com/ubuntu focal/main amd64 {pkg} amd64 4.1.2-1 [214 kB]"
        )
    for pkg in pkgs:
        lines.append(f"Selecting previously unselected package {pkg}.")
        lines.append(f"Preparing to unpack .../{pkg}_4.1.2-1_amd64.deb ...")
        lines.append(f"Unpacking {pkg} (4.1.2-1) ...")
    for pkg in pkgs:
        lines.append(f"Setting up {pkg} (4.1.2-1) ...")
    lines.append("Processing triggers for man-db (2.9.1-1) ...")
    lines.append("Processing triggers for install-info (6.7.0.dfsg.2-5) ...")
    return "\n".join(lines) + "\n"


def git_log():
    lines = [
        "Cloning into 'proj'...",
        "remote: Enumerating objects: 1500, done.",
        "remote: Total 1500 (delta 0), reused 0 (delta 0), pack-reused 1500",
    ]
    for pct in range(4, 100, 8):
        lines.append(f"remote: Counting objects:  {pct}% ({pct * 15}/1500)")
    for pct in range(4, 100, 8):
        lines.append(f"remote: Compressing objects:  {pct}% ({pct * 9}/900)")
    for pct in range(4, 100, 8):
        lines.append(f"Receiving objects:  {pct}% ({pct * 15}/1500)")
    for pct in range(4, 100, 8):
        lines.append(f"Resolving deltas:  {pct}% ({pct * 6}/600)")
    lines += [
        "Receiving objects: 100% (1500/1500), 2.10 MiB | 5.00 MiB/s, done.",
        "Resolving deltas: 100% (600/600), done.",
        "Updating files: 100% (200/200), done.",
        "Checking connectivity... done.",
        "Done.",
    ]
    return "\n".join(lines) + "\n"


def objdump_log():
    lines = [
        "app:     file format elf64-x86-64",
        "",
        "Disassembly of section .text:",
        "0000000000001129 <main>:",
    ]
    addr = 0x1129
    for i in range(45):
        lines.append(f"    {addr:x}:\tf3 0f 1e fa          \tendbr64")
        addr += 4
    lines.append("0000000000001180 <helper>:")
    for i in range(45):
        lines.append(f"    {addr:x}:\t48 89 e5             \tmov    %rsp,%rbp")
        addr += 4
    return "\n".join(lines) + "\n"


def pip_log():
    lines = ["Collecting flask", "  Downloading Flask-2.0.1-py3-none-any.whl (94 kB)"]
    deps = [
        ("werkzeug", "Werkzeug-2.0.1-py3-none-any.whl", "288 kB"),
        ("jinja2", "Jinja2-3.0.2-py3-none-any.whl", "133 kB"),
        ("itsdangerous", "itsdangerous-2.0.1-py3-none-any.whl", "18 kB"),
        ("click", "click-8.0.3-py3-none-any.whl", "97 kB"),
        ("requests", "requests-2.26.0-py3-none-any.whl", "62 kB"),
        ("urllib3", "urllib3-1.26.7-py2.py3-none-any.whl", "138 kB"),
        ("idna", "idna-3.3-py3-none-any.whl", "61 kB"),
        ("certifi", "certifi-2021.10.8-py2.py3-none-any.whl", "149 kB"),
    ]
    for name, wheel, size in deps:
        lines.append(f"Collecting {name}")
        lines.append(f"  Downloading {wheel} ({size})")
    lines.append("Installing collected packages: " + ", ".join(d[0] for d in deps) + ", flask")
    lines.append(
        "Successfully installed certifi-2021.10.8 click-8.0.3 flask-2.0.1 idna-3.3 "
        "itsdangerous-2.0.1 jinja2-3.0.2 requests-2.26.0 urllib3-1.26.7 werkzeug-2.0.1"
    )
    return "\n".join(lines) + "\n"


def heredoc_log():
    body = [
        "#!/bin/sh",
        "set -e",
        "echo start",
        "for f in tests/*.txt; do",
        "  wc -l \"$f\"",
        "done",
        "echo checking data",
        "sort data/input.txt > /tmp/sorted.txt",
        "cmp /tmp/sorted.txt data/expected.txt",
        "echo comparing versions",
        "grep -c PASS /tmp/results.txt",
        "echo writing summary",
        "tail -n 3 /tmp/results.txt",
        "echo cleanup",
        "rm -f /tmp/sorted.txt",
        "echo all checks passed",
        "exit 0",
    ]
    return "\n".join("> " + line for line in body) + "\n"


def make_log():
    lines = ["mkdir -p build"]
    defines = (
        "-DPROJ_VERSION=\\\"1.4.2\\\" -DPROJ_BUILD_TYPE=\\\"Release\\\" "
        "-DPROJ_ENABLE_LOGGING=1 -DPROJ_ENABLE_METRICS=1 -DPROJ_USE_SYSTEM_ZLIB=1 "
        "-DPROJ_DISABLE_DEPRECATED=1 -DPROJ_DEFAULT_BUFFER_SIZE=65536"
    )
    for i in range(1, 26):
        lines.append(
            f"g++ -std=c++17 -O2 -Wall -Wextra -fPIC {defines} "
            f"-I include -I third_party/include -c src/module{i:02d}.cpp -o build/module{i:02d}.o"
        )
    lines.append("g++ -o build/app build/module01.o build/module02.o")
    lines.append("Build complete.")
    return "\n".join(lines) + "\n"


def keygen_log_rsa():
    lines = ["Generating public/private rsa key pair."]
    lines += ["." * 44 for _ in range(17)]
    lines += [
        "Your identification has been saved in id_test",
        "Your public key has been saved in id_test.pub",
        "The key fingerprint is:",
        "SHA256:gN7kPqv3Jr0cT8yWl2xDh5mZb1nQf4sVa6uHe9iRj0k root@host",
    ]
    return "\n".join(lines) + "\n"


def keygen_log_ed25519():
    lines = ["Generating public/private ed25519 key pair."]
    lines += [("." * 30 + "+" * 20) for _ in range(17)]
    lines += [
        "Your identification has been saved in id_test2",
        "The key fingerprint is:",
    ]
    return "\n".join(lines) + "\n"


def main():
    os.makedirs(OUT, exist_ok=True)

    r_pkgs = lambda base: [f"{base}-{n}" for n in (
        "core", "base", "recommended", "stats", "graphics", "grid", "methods",
        "parallel", "splines", "tools", "utils", "compiler", "datasets", "tcltk",
        "translations")]
    steps = [
        ("pwd", "/app\n"),
        ("ls", "DESCRIPTION data src tests\n"),
        ("apt-get install -y r-base", apt_log(r_pkgs("r-base"))),
        ("which R", "/usr/bin/R\n"),
        ("R --version", "R scripting front-end version 4.1.2 (2021-11-01)\n"),
        ("apt-get install -y r-cran-testthat", apt_log(r_pkgs("r-cran-testthat"))),
        ("ls /usr/lib/R/site-library", "testthat\n"),
        ("cat DESCRIPTION", "Package: analysis\nVersion: 0.3.1\nDepends: R (>= 4.0)\n"),
        ("apt-get install -y r-cran-jsonlite", apt_log(r_pkgs("r-cran-jsonlite"))),
        ("ls data", "input.csv reference.csv\n"),
        ("head -n 2 data/input.csv", "id,value\n1,0.53\n"),
        ("wc -l data/input.csv", "2001 data/input.csv\n"),
        ("Rscript -e 'library(jsonlite)'", ""),
        ("ls tests", "run.R testthat\n"),
        ("apt-get install -y r-cran-dplyr", apt_log(r_pkgs("r-cran-dplyr"))),
        ("Rscript tests/run.R", "Loading required package: testthat\nTest passed: 12\n"),
        ("ls tests/testthat", "test-load.R test-summary.R\n"),
        ("Rscript -e 'sessionInfo()' ", "R version 4.1.2 (2021-11-01)\nPlatform: x86_64-pc-linux-gnu\n"),
        ("head -n 1 tests/run.R", "library(testthat)\n"),
        ("whoami", "root\n"),
        ("date -u +%Y-%m-%d", "2024-03-14\n"),
        ("df -h /", "Filesystem Size Used Avail Use% Mounted on\noverlay 60G 12G 48G 20% /\n"),
        ("uname -r", "5.15.0-89-generic\n"),
        ("Rscript -e 'quantile(1:100)'", "  0%  25%  50%  75% 100%\n   1   25   50   75  100\n"),
        ("ls -la tests", "total 16\ndrwxr-xr-x 3 root root 4096 run.R testthat\n"),
    ]
    write_trajectory(
        "01_apt_r_task.jsonl",
        {"task_id": "apt_r_task",
         "instruction": "Install R and the packages needed to run the repository test suite, then run it.",
         "terminal_preview": "root@host:/app#"},
        steps)

    write_trajectory(
        "02_git_clone_task.jsonl",
        {"task_id": "git_clone_task",
         "instruction": "Clone the project repository and inspect its layout.",
         "terminal_preview": "root@host:/work#"},
        [
            ("git clone https://github.com/example/proj.git", git_log()),
            ("ls proj", "README.md src tests\n"),
            ("wc -l proj/README.md", "120 proj/README.md\n"),
        ])

    write_trajectory(
        "03_objdump_task.jsonl",
        {"task_id": "objdump_task",
         "instruction": "Disassemble the binary and locate the main routine.",
         "terminal_preview": "root@host:/bin-analysis#"},
        [
            ("ls", "app app.txt\n"),
            ("objdump -d app", objdump_log()),
            ("file app", "app: ELF 64-bit LSB pie executable, x86-64\n"),
        ])

    write_trajectory(
        "04_pip_task.jsonl",
        {"task_id": "pip_task",
         "instruction": "Install the Python dependencies for the web service.",
         "terminal_preview": "root@host:/srv#"},
        [
            ("pip install flask requests", pip_log()),
            ("python -c 'import flask'", ""),
            ("pip show flask", "Name: Flask\nVersion: 2.0.1\n"),
        ])

    write_trajectory(
        "05_heredoc_task.jsonl",
        {"task_id": "heredoc_task",
         "instruction": "Write a shell script that checks the data files, then run it.",
         "terminal_preview": "root@host:/app#"},
        [
            ("cat > run_checks.sh << 'EOF'", heredoc_log()),
            ("chmod +x run_checks.sh", ""),
            ("sh run_checks.sh", "start\nall checks passed\n"),
        ])

    write_trajectory(
        "06_make_task.jsonl",
        {"task_id": "make_task",
         "instruction": "Build the project with the bundled Makefile.",
         "terminal_preview": "root@host:/proj#"},
        [
            ("make -j2", make_log()),
            ("./build/app", "hello\n"),
        ])

    write_trajectory(
        "07_short_benign_task.jsonl",
        {"task_id": "short_benign_task",
         "instruction": "Report basic facts about the machine.",
         "terminal_preview": "root@host:~#"},
        [
            ("pwd", "/root\n"),
            ("whoami", "root\n"),
            ("uname -m", "x86_64\n"),
            ("date -u +%H:%M", "09:30\n"),
            ("ls /", "bin boot dev etc home lib root srv tmp usr var\n"),
        ])

    write_trajectory(
        "08_keygen_complaint_task.jsonl",
        {"task_id": "keygen_complaint_task",
         "instruction": "Generate SSH keys for the deployment user.",
         "terminal_preview": "root@host:~#"},
        [
            ("ssh-keygen -t rsa -b 2048 -f id_test -N ''", keygen_log_rsa(),
             "The output seems truncated, I need the full output before continuing."),
            ("ssh-keygen -t ed25519 -f id_test2 -N ''", keygen_log_ed25519()),
        ])

    objdump_rule = {
        "rule_id": "objdump_disassembly",
        "trigger_regex": "\\bobjdump\\b",
        "description": "Compresses objdump disassembly listings: strips per-instruction lines, keeps section headers and symbol labels.",
        "keep_patterns": ["Disassembly of section", "^[0-9a-f]+ <"],
        "strip_patterns": ["^\\s*[0-9a-f]+:\\s"],
        "keep_first_n": 4,
        "keep_last_n": 4,
        "max_lines": None,
        "summary_header": "[disassembly compressed]",
        "priority": 45,
    }
    openssl_v2 = {
        "rule_id": "seed_openssl_v2",
        "trigger_regex": "\\b(openssl|ssh-keygen|gpg)\\b",
        "description": "More conservative key generation rule: only strips whole lines made of progress dots and plus signs.",
        "keep_patterns": [
            "\\berror:", "unable to", "Generating",
            "Your identification has been saved", "The key fingerprint is", "randomart",
        ],
        "strip_patterns": ["^[.+o]{40,}$"],
        "keep_first_n": 8,
        "keep_last_n": 8,
        "max_lines": None,
        "summary_header": "[key generation progress compressed]",
        "priority": 65,
    }
    pytest_rule = {
        "rule_id": "pytest_output",
        "trigger_regex": "\\bpytest\\b",
        "description": "Compresses pytest runs: strips per-test PASSED lines and progress dots, keeps failures and the summary.",
        "keep_patterns": ["FAILED", "ERROR", "={3,}", "passed", "failed"],
        "strip_patterns": ["PASSED$", "^[.Fsx]{10,}$"],
        "keep_first_n": 5,
        "keep_last_n": 10,
        "max_lines": None,
        "summary_header": "[pytest output compressed]",
        "priority": 48,
    }
    proposal = {
        "selected_rule_ids": [
            "seed_git_noise", "seed_heredoc", "seed_pip_install", "seed_apt_install",
            "seed_compiler_output", "seed_openssl", "seed_openssl_v2",
            "seed_openssl_v2_v2", "seed_openssl_v2_v2_v2", "seed_openssl_v2_v2_v2_v2",
            "objdump_disassembly", "pytest_output",
        ],
        "modified_rules": [],
        "new_rules": [],
    }
    transcript = [
        {"template_id": "proposal_with_cache", "bindings_hash": "*",
         "response_text": json.dumps(proposal, indent=2)},
        {"template_id": "proposal_no_cache", "bindings_hash": "*",
         "response_text": json.dumps({"rules": [pytest_rule]}, indent=2)},
        {"template_id": "spawn_new", "bindings_hash": "*",
         "response_text": json.dumps(objdump_rule, indent=2)},
        {"template_id": "spawn_replacement", "bindings_hash": "*",
         "response_text": json.dumps(openssl_v2, indent=2)},
    ]
    with open(os.path.join(OUT, "mock_transcript.json"), "w") as f:
        json.dump(transcript, f, indent=2)
        f.write("\n")
    print("fixtures written to", OUT)


if __name__ == "__main__":
    main()
