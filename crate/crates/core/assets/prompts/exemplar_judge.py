import sys

def read_file(filepath):
    with open(filepath, 'r') as f:
        return f.read().strip().split('\n')

def validate_solution(stdin_path, stdout_path, answer_path):
    stdin_lines = read_file(stdin_path)
    stdout_lines = read_file(stdout_path)
    participant_output = read_file(answer_path)

    if participant_output == [''] and stdout_lines != ['']:
        return False
    if len(participant_output) != 1:
        return False
    n = int(stdin_lines[0].strip())
    parts = participant_output[0].split()
    if len(parts) != 2:
        return False
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        return False
    return a >= 0 and b >= 0 and a + b == n

stdin_path = "stdin.txt"
stdout_path = "stdout.txt"
answer_path = "answer.txt"

is_valid = validate_solution(stdin_path, stdout_path, answer_path)

if is_valid:
    sys.exit(0)
else:
    sys.exit(1)
